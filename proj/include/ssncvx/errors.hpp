#pragma once

#include <stdexcept>
#include <string>

namespace ssncvx {

enum class Errc {
    DimensionMismatch,
    NotPSD,
    EmptyModel,
    UnsupportedKind,
    ShapeMismatch,
    StructureMismatch,
    LayoutMismatch,
    BreakdownNonSPD,
    UnknownPreset,
    SizeCap,
    InvalidArgument,
    Parse,
};

inline const char *errc_name(Errc e) {
    switch (e) {
        case Errc::DimensionMismatch: return "DimensionMismatch";
        case Errc::NotPSD: return "NotPSD";
        case Errc::EmptyModel: return "EmptyModel";
        case Errc::UnsupportedKind: return "UnsupportedKind";
        case Errc::ShapeMismatch: return "ShapeMismatch";
        case Errc::StructureMismatch: return "StructureMismatch";
        case Errc::LayoutMismatch: return "LayoutMismatch";
        case Errc::BreakdownNonSPD: return "BreakdownNonSPD";
        case Errc::UnknownPreset: return "UnknownPreset";
        case Errc::SizeCap: return "SizeCap";
        case Errc::InvalidArgument: return "InvalidArgument";
        case Errc::Parse: return "Parse";
    }
    return "Unknown";
}

/// Library error. `field()` names the offending input where applicable.
class Error : public std::runtime_error {
  public:
    Error(Errc code, std::string field, const std::string &msg)
        : std::runtime_error(std::string(errc_name(code)) + " [" + field + "]: " + msg),
          code_(code), field_(std::move(field)) {}

    Errc code() const { return code_; }
    const std::string &field() const { return field_; }

  private:
    Errc code_;
    std::string field_;
};

} // namespace ssncvx
