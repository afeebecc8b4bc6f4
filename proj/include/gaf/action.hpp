#pragma once

#include "gaf/field.hpp"
#include "gaf/geometry.hpp"

#include <span>
#include <stdexcept>
#include <vector>

namespace gaf {

class RegistrationError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Closed-form rigid alignment of index-paired clouds (SVD with reflection
/// fix). Throws RegistrationError when the centered source covariance has
/// rank below 2.
Se3 kabsch_align(std::span<const Vec3> src, std::span<const Vec3> dst);

enum class Correspondence { PairedByIndex, NearestNeighbor };

struct IcpConfig {
    int max_iterations = 50;
    double tolerance = 1e-8;  // on the change of RMS between iterations
    Correspondence correspondence = Correspondence::NearestNeighbor;
};

struct IcpResult {
    Se3 transform;  // maps src toward dst
    double rms = 0.0;
    int iterations = 0;
};

/// Point-to-point ICP from the identity.
IcpResult icp(std::span<const Vec3> src, std::span<const Vec3> dst, const IcpConfig& cfg = {});

/// A rigid transform split into per-controller-step increments:
/// steps[k] = interp(total, (k+1)/h) * interp(total, k/h)^-1.
struct InitAction {
    Se3 total;
    std::vector<Se3> steps;
    int horizon() const { return int(steps.size()); }
};

InitAction interpolate_action(const Se3& total, int horizon);

/// Registers the labeled subset of the field against its advanced positions
/// and splits the result over the horizon. Nearly transparent points can be
/// left out with min_opacity.
InitAction compute_init_action(const GaussianField& field, std::uint8_t label, int horizon,
                               const IcpConfig& cfg = {}, double min_opacity = 0.0);

/// Re-expresses world-frame increments in the frame of a body at pose:
/// pose^-1 * step * pose.
InitAction to_body_frame(const InitAction& world, const Se3& pose);

/// World-frame increments, each applied on the left: steps[h-1] * ... * steps[0].
Se3 compose_steps(std::span<const Se3> steps);

/// Body-frame increments, each applied on the right: steps[0] * ... * steps[h-1].
Se3 compose_body_steps(std::span<const Se3> steps);

struct ActionStep {
    Se3 motion;            // relative end-effector motion for one step
    double gripper = 0.0;  // 1 closes, 0 opens
};

struct ActionSequence {
    std::vector<ActionStep> steps;
    int horizon() const { return int(steps.size()); }
};

}  // namespace gaf
