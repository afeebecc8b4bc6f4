#pragma once

#include "gaf/action.hpp"
#include "gaf/field.hpp"
#include "gaf/image.hpp"
#include "gaf/renderer.hpp"

#include <Eigen/Core>

#include <cstdint>
#include <functional>
#include <memory>
#include <span>
#include <stdexcept>
#include <vector>

namespace gaf {

// Diffusion space ------------------------------------------------------------

/// Per-dof scale between twist coordinates and the diffusion space, so that
/// unit Gaussian noise is commensurate with one controller step of motion.
struct ActionNormalization {
    double rotation = 0.02;      // rad per step
    double translation = 0.0125;  // scene units per step
};

/// A candidate action in diffusion space: one normalized twist (rotation
/// part first) per step, plus a clean gripper command per step.
struct NoisyAction {
    std::vector<Twist> steps;
    std::vector<double> gripper;
    int level = 0;

    int horizon() const { return int(steps.size()); }
    Eigen::VectorXd flat() const;
    void set_flat(const Eigen::VectorXd& v);
};

NoisyAction to_diffusion_space(const ActionSequence& seq, const ActionNormalization& norm);
ActionSequence from_diffusion_space(const NoisyAction& x, const ActionNormalization& norm);
/// Gripper commands default to 0 (open).
NoisyAction to_diffusion_space(const InitAction& init, const ActionNormalization& norm);

/// Cumulative signal coefficients alpha_bar[k] for noise levels k = 0..K-1.
struct DenoiseSchedule {
    std::vector<double> alpha_bar;

    static constexpr double kFirst = 1.0 - 1e-6;

    /// Cosine schedule with alpha_bar[0] = 1 - 1e-6.
    static DenoiseSchedule cosine(int steps);
    /// Levels 0, stride, 2*stride, ... of this schedule.
    DenoiseSchedule strided(int count, int stride) const;
    /// Cosine(50) strided to the three low-noise levels used at inference.
    static DenoiseSchedule inference();

    int size() const { return int(alpha_bar.size()); }
    /// Every coefficient in (0, 1).
    void validate() const;
    bool strictly_decreasing() const;
};

struct NoisedAction {
    NoisyAction action;
    Eigen::VectorXd noise;
};

/// x_k = sqrt(ab_k) x_0 + sqrt(1 - ab_k) eps with eps ~ N(0, I) per twist
/// dof; gripper commands are left clean.
NoisedAction add_noise(const NoisyAction& clean, int level, const DenoiseSchedule& schedule, std::uint64_t seed);

/// x0_hat = (x_k - sqrt(1 - ab_k) eps_hat) / sqrt(ab_k).
Eigen::VectorXd predict_clean(const NoisyAction& x, const Eigen::VectorXd& eps_hat, const DenoiseSchedule& schedule);

/// Deterministic DDIM (eta = 0) update from level k to k - 1.
NoisyAction ddim_step(const NoisyAction& x, const Eigen::VectorXd& eps_hat, const DenoiseSchedule& schedule);

// Guidance ---------------------------------------------------------------------

struct GuidanceImage {
    Image image;                     // current-scene render with the gripper overlay
    std::vector<std::uint8_t> mask;  // 1 where the overlay is opaque (accumulated alpha >= 0.5)
};

/// Rigidly poses a body-frame primitive: means move with the pose, rotations
/// are premultiplied by the pose rotation.
GaussianField pose_primitive(const GaussianField& primitive, const Se3& pose);

/// Overlay mask of a field rendered on its own.
std::vector<std::uint8_t> footprint_mask(const GaussianField& field, const Camera& cam, const RenderConfig& cfg);

/// Renders the current scene per camera and splats the gripper primitive
/// posed at gripper_pose * action over it.
std::vector<GuidanceImage> render_action_guidance(const GaussianField& scene, const Se3& gripper_pose,
                                                  const Se3& action, std::span<const Camera> cameras,
                                                  const GaussianField& primitive, const RenderConfig& cfg = {});

// Denoisers --------------------------------------------------------------------

struct DenoiserOutput {
    Eigen::VectorXd noise;        // one entry per twist dof
    std::vector<double> gripper;  // per step, in (0, 1)
};

class Denoiser {
public:
    virtual ~Denoiser() = default;
    /// Must be safe to call concurrently.
    virtual DenoiserOutput predict(const NoisyAction& x, std::span<const GuidanceImage> guidance,
                                   const DenoiseSchedule& schedule) const = 0;
};

/// Knows the clean action and returns the exact noise that separates it
/// from the input.
class OracleDenoiser final : public Denoiser {
public:
    explicit OracleDenoiser(NoisyAction clean) : clean_(std::move(clean)) {}
    DenoiserOutput predict(const NoisyAction& x, std::span<const GuidanceImage> guidance,
                           const DenoiseSchedule& schedule) const override;

private:
    NoisyAction clean_;
};

/// Linear features used by the ridge denoiser: bias, the noisy action, its
/// magnitude, and 8x8 block averages of each guidance view's mask and luma.
Eigen::VectorXd denoiser_features(const NoisyAction& x, std::span<const GuidanceImage> guidance);

struct DenoiserSample {
    NoisyAction noisy;
    std::vector<GuidanceImage> guidance;
    Eigen::VectorXd noise;        // target
    std::vector<double> gripper;  // target, in {0, 1}
};

/// Ridge regression from denoiser_features to noise and gripper targets,
/// with one weight matrix per noise level.
class RidgeDenoiser final : public Denoiser {
public:
    static RidgeDenoiser train(std::span<const DenoiserSample> samples, int levels, double lambda);

    DenoiserOutput predict(const NoisyAction& x, std::span<const GuidanceImage> guidance,
                           const DenoiseSchedule& schedule) const override;

    int levels() const { return int(weights_.size()); }

private:
    std::vector<Eigen::MatrixXd> weights_;  // per level: outputs x features
};

// Refinement ---------------------------------------------------------------------

struct RefineConfig {
    ActionNormalization normalization;
    RenderConfig render;
    GaussianField primitive;  // gripper in its body frame
    /// Called with the noise level and the guidance rendered for it.
    std::function<void(int, const std::vector<GuidanceImage>&)> on_guidance;
};

class ShapeError : public std::runtime_error {
public:
    using std::runtime_error::runtime_error;
};

/// Starts from the init action (body frame) at the top noise level and runs
/// one denoiser call per level down to 0, re-rendering guidance for the
/// current candidate each time. Gripper commands are thresholded at 0.5.
ActionSequence refine_action(const InitAction& init, const GaussianField& scene, const Se3& gripper_pose,
                             std::span<const Camera> cameras, const Denoiser& denoiser,
                             const DenoiseSchedule& schedule, const RefineConfig& cfg);

// Training loss ---------------------------------------------------------------------

struct RefineLoss {
    double value = 0.0;
    double direction_term = 0.0;
    double noise_term = 0.0;
    double gripper_term = 0.0;
    Eigen::VectorXd d_direction;
    Eigen::VectorXd d_noise;
    Eigen::VectorXd d_gripper;
};

inline constexpr double kProbabilityGuard = 1e-7;

/// mean|D - D_gt| + mean|eps - eps_gt| + BCE(g, g_gt), with gradients with
/// respect to D, eps and g. g is clamped to [1e-7, 1 - 1e-7] first.
RefineLoss refine_loss(const Eigen::VectorXd& direction, const Eigen::VectorXd& direction_gt,
                       const Eigen::VectorXd& noise, const Eigen::VectorXd& noise_gt,
                       const Eigen::VectorXd& gripper, const Eigen::VectorXd& gripper_gt);

}  // namespace gaf
