#pragma once

#include <stdexcept>
#include <string>

namespace abig {

enum class Err {
    TooFewPoints,
    DegenerateInput,
    EmptyInput,
    PointOutsideClip,
    NonPositiveRadius,
    ZeroAttrVector,
    NoTriangles,
    EmptyEdgeList,
    ShapeMismatch,
    NaNProduced,
    NonScalarLoss,
    NonPositiveTemperature,
    NonSquare,
    AsymmetricInput,
    EmptyBatch,
    ConfigInvalid,
    EmptyTestSet,
    FoldTooSmall,
    SpecInvalid,
    UnknownImage,
    MalformedRecord,
    CheckpointVersion,
    IoFailure,
};

class Error : public std::runtime_error {
public:
    Error(Err code, const std::string& msg) : std::runtime_error(msg), code_(code) {}
    Err code() const { return code_; }

private:
    Err code_;
};

[[noreturn]] inline void fail(Err code, const std::string& msg) { throw Error(code, msg); }

struct Rect {
    double x0 = 0, y0 = 0, x1 = 0, y1 = 0;

    double width() const { return x1 - x0; }
    double height() const { return y1 - y0; }
    double area() const { return width() * height(); }
    bool contains_strict(double x, double y) const {
        return x > x0 && x < x1 && y > y0 && y < y1;
    }
};

} // namespace abig
