#pragma once

#include "gaf/geometry.hpp"

#include <array>
#include <cstdint>
#include <filesystem>
#include <stdexcept>
#include <vector>

namespace gaf {

enum class Label : std::uint8_t { Background = 0, Gripper = 1, Object = 2 };

/// One motion-augmented Gaussian. Opacity is stored as a logit and scales as
/// logarithms; the renderer applies the activations.
struct GaussianPoint {
    Vec3 mean = Vec3::Zero();
    Vec3 displacement = Vec3::Zero();
    Vec3 color = Vec3::Constant(0.5);
    double opacity_logit = 0.0;
    Quaternion rotation;
    Vec3 log_scale = Vec3::Constant(std::log(0.05));
    std::uint8_t label = 0;

    double opacity() const { return 1.0 / (1.0 + std::exp(-opacity_logit)); }
    Vec3 scale() const { return log_scale.array().exp().matrix().cwiseMax(kScaleFloor); }

    friend bool operator==(const GaussianPoint&, const GaussianPoint&) = default;
};

inline constexpr int kParamsPerPoint = 17;

/// Slot layout of the flattened per-point parameter vector: mean(3),
/// displacement(3), color(3), opacity(1), rotation wxyz(4), log_scale(3).
enum class ParamGroup { Mean, Displacement, Color, Opacity, Rotation, Scale };
inline constexpr std::array<ParamGroup, kParamsPerPoint> kSlotGroups{
    ParamGroup::Mean, ParamGroup::Mean, ParamGroup::Mean,
    ParamGroup::Displacement, ParamGroup::Displacement, ParamGroup::Displacement,
    ParamGroup::Color, ParamGroup::Color, ParamGroup::Color,
    ParamGroup::Opacity,
    ParamGroup::Rotation, ParamGroup::Rotation, ParamGroup::Rotation, ParamGroup::Rotation,
    ParamGroup::Scale, ParamGroup::Scale, ParamGroup::Scale};

using PointParams = std::array<double, kParamsPerPoint>;
PointParams pack(const GaussianPoint& p);
void unpack(const PointParams& v, GaussianPoint& p);

struct GaussianField {
    std::vector<GaussianPoint> points;
    std::uint32_t timestep = 0;
    std::uint32_t interval = 8;

    std::size_t size() const { return points.size(); }
    bool empty() const { return points.empty(); }

    friend bool operator==(const GaussianField&, const GaussianField&) = default;
};

/// Per-point gradient buffers aligned with GaussianField::points, in the
/// PointParams slot layout.
struct FieldDelta {
    std::vector<PointParams> grads;

    FieldDelta() = default;
    explicit FieldDelta(std::size_t n) : grads(n, PointParams{}) {}

    std::size_t size() const { return grads.size(); }
    FieldDelta& operator+=(const FieldDelta& o);
    bool all_finite() const;
};

/// mean += fraction * displacement, displacement *= (1 - fraction).
GaussianField advance(const GaussianField& field, double fraction);

class EmptySubsetError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

struct LabeledSubset {
    std::vector<Vec3> positions;
    std::vector<Vec3> future_positions;
};

/// Points with the label and at least min_opacity. Throws EmptySubsetError
/// when none qualify.
LabeledSubset extract_subset(const GaussianField& field, std::uint8_t label, double min_opacity = 0.0);

// GAF1 binary format -------------------------------------------------------

class FieldFormatError : public std::runtime_error {
public:
    enum class Kind { Io, Magic, Version, Truncated };
    FieldFormatError(Kind kind, const std::string& what) : std::runtime_error(what), kind_(kind) {}
    Kind kind() const { return kind_; }

private:
    Kind kind_;
};

inline constexpr std::uint32_t kFieldFormatVersion = 1;

/// Values are written as float32; a field loaded from disk round-trips
/// bit-exactly through encode/decode.
std::vector<std::uint8_t> encode_field(const GaussianField& field);
GaussianField decode_field(const std::vector<std::uint8_t>& bytes);

void save_field(const std::filesystem::path& path, const GaussianField& field);
GaussianField load_field(const std::filesystem::path& path);

}  // namespace gaf
