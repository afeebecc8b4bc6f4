#pragma once

#include "gaf/action.hpp"
#include "gaf/field.hpp"
#include "gaf/fitter.hpp"
#include "gaf/refine.hpp"

#include <cstdint>
#include <functional>
#include <optional>
#include <random>
#include <stdexcept>
#include <string>
#include <vector>

namespace gaf {

class SpecError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

struct GripperSpec {
    int count = 72;
    double extent = 0.5;  // palm width
    Se3 pose;
    Twist twist = Twist::Zero();  // body frame, per interval
};

struct ObjectSpec {
    int count = 60;
    Vec3 color{0.2, 0.6, 0.3};
    Se3 pose;
    Vec3 radii{0.15, 0.08, 0.15};
    std::uint8_t label = static_cast<std::uint8_t>(Label::Object);
    Twist twist = Twist::Zero();
};

struct SceneSpec {
    std::uint64_t seed = 0;
    Vec3 bbox_min = Vec3::Constant(-1.0);
    Vec3 bbox_max = Vec3::Constant(1.0);
    GripperSpec gripper;
    std::vector<ObjectSpec> objects;
    std::vector<Camera> cameras;   // supervision rig
    std::vector<Camera> held_out;  // evaluation only
    Se3 goal;                      // gripper target for closed-loop episodes

    /// Throws SpecError on empty rigs, bad counts, twists of 45 degrees or
    /// more, or a gripper outside the bounding box.
    void validate() const;
};

inline constexpr double kBodyMargin = 0.05;

/// Cameras on a ring around the origin, all looking at it.
std::vector<Camera> ring_rig(int count, double azimuth_start_deg, double azimuth_step_deg, double elevation,
                             double distance, double focal, int width, int height);

/// Two supervision cameras plus one held-out camera, 64x64.
SceneSpec default_scene_spec();
/// Four supervision views, a fifth held-out view, and about 200 Gaussians.
SceneSpec dense_scene_spec();

/// The gripper in its body frame: a palm bar along x and two fingers
/// hanging along -y, two rows deep in z, colored with a gradient per part.
GaussianField gripper_primitive(int count, double extent);

struct GeneratedScene {
    GaussianField field;  // ground truth at t with displacement to t + interval
    SupervisionSet supervision;
    std::vector<View> held_out_current;
    std::vector<View> held_out_future;
};

/// Displacement of a rigid body at pose moved by a body-frame twist:
/// pose * exp(twist) * pose^-1 * mu - mu.
Vec3 body_displacement(const Vec3& mu, const Se3& pose, const Twist& twist);

/// Builds the ground-truth field (gripper label 1, objects by their label)
/// and renders supervision at t and t + interval. Throws SpecError when
/// bodies are closer than kBodyMargin.
GeneratedScene generate_scene(const SceneSpec& spec);

/// Renders current and future views of a field from a rig.
SupervisionSet render_supervision(const GaussianField& field, const std::vector<Camera>& cameras,
                                  const RenderConfig& cfg = {});

// Closed loop ---------------------------------------------------------------------

enum class PerceptionMode { GroundTruth, Fitted };
enum class DenoiserKind { Oracle, Ridge };

struct ControllerConfig {
    PerceptionMode mode = PerceptionMode::GroundTruth;
    DenoiserKind denoiser = DenoiserKind::Oracle;
    int horizon = 8;
    int budget = 20;  // perceive-act cycles
    double max_cycle_translation = 0.05;
    double max_cycle_rotation_deg = 10.0;
    double success_translation = 0.02;
    double success_rotation_deg = 2.0;
    double actuation_noise = 0.0;  // per-axis translation noise per executed step
    IcpConfig icp;             // index-paired: the field carries correspondences
    double min_opacity = 0.3;  // registration ignores fainter gripper points
    RefineConfig refine;  // primitive is filled in from the scene spec when empty
    DenoiseSchedule schedule = DenoiseSchedule::inference();
    FitConfig first_fit;  // fitted mode, first cycle
    FitConfig warm_fit;   // fitted mode, later cycles (warm started)
    double init_position_noise = 0.01;
    const RidgeDenoiser* ridge = nullptr;  // required for DenoiserKind::Ridge
    /// Called with (cycle, level, guidance) for every guidance render.
    std::function<void(int, int, const std::vector<GuidanceImage>&)> on_guidance;

    ControllerConfig();
    void validate() const;
};

struct EpisodeState {
    GaussianField field;  // ground truth at the current time, displacement zero
    Se3 gripper_pose;
    Se3 goal;
    double gripper_command = 0.0;
    int steps = 0;  // executed controller steps
    bool success = false;
    bool failed = false;  // left the bounding box
    Vec3 bbox_min = Vec3::Constant(-1.0);
    Vec3 bbox_max = Vec3::Constant(1.0);
};

EpisodeState initial_state(const SceneSpec& spec);

/// gripper_pose <- gripper_pose * step (plus optional translation noise);
/// gripper Gaussians move rigidly with it. Sets failed when the gripper
/// origin leaves the bounding box.
EpisodeState execute(const EpisodeState& state, const Se3& step, double gripper, double noise_sigma = 0.0,
                     std::mt19937_64* rng = nullptr);

/// The body-frame motion the scripted expert makes in one cycle: the pose
/// error to the goal, shortened to the per-cycle limits.
Se3 expert_motion(const Se3& pose, const Se3& goal, const ControllerConfig& cfg);

/// Expert action over the horizon in body-frame diffusion coordinates.
/// The gripper closes on steps that end within 0.05 of the goal.
NoisyAction expert_action(const Se3& pose, const Se3& goal, const ControllerConfig& cfg);

/// The observed scene for one cycle: the current state with the gripper
/// displaced by the expert motion over the interval.
GaussianField observed_field(const EpisodeState& state, const ControllerConfig& cfg);

struct CycleMetrics {
    int cycle = 0;
    double icp_rms = 0.0;
    double fit_psnr = 0.0;  // training-view PSNR in fitted mode, 0 otherwise
    PoseError init_error;   // init action vs expert motion
    PoseError pose_error;   // gripper vs goal after the cycle

    friend bool operator==(const CycleMetrics&, const CycleMetrics&) = default;
};

struct EpisodeReport {
    int cycles = 0;
    int steps = 0;
    PoseError final_error;
    bool success = false;
    bool out_of_bounds = false;
    std::vector<CycleMetrics> per_cycle;

    friend bool operator==(const EpisodeReport&, const EpisodeReport&) = default;
};

EpisodeReport run_episode(const SceneSpec& spec, const ControllerConfig& cfg);

/// Random reachable task: goal in the workspace above an object, start
/// above the goal with a random tilt.
SceneSpec random_task(const SceneSpec& base, std::uint64_t seed);

/// Moves the goal to target and rebuilds the start pose and objects around
/// it the same way random_task does.
SceneSpec task_at(const SceneSpec& base, const Vec3& target, std::uint64_t seed);

struct SweepGrid {
    int nx = 3;
    int nz = 3;
    Vec3 lower{-0.3, 0.0, -0.3};  // goal corner; y is fixed at lower.y
    Vec3 upper{0.3, 0.0, 0.3};
};

struct SweepCell {
    int ix = 0;
    int iz = 0;
    Vec3 goal = Vec3::Zero();
    EpisodeReport report;
};

/// One episode per grid cell, in parallel, seeded by base.seed and the cell
/// index.
std::vector<SweepCell> sweep(const SceneSpec& base, const SweepGrid& grid, const ControllerConfig& cfg);

/// Samples for the ridge denoiser: for each of `episodes` random tasks the
/// expert is rolled out and every cycle contributes `draws` noised samples
/// per schedule level.
std::vector<DenoiserSample> collect_denoiser_samples(const SceneSpec& base, const ControllerConfig& cfg,
                                                     int episodes, std::uint64_t seed, int draws = 4);

RidgeDenoiser train_ridge_denoiser(const SceneSpec& base, const ControllerConfig& cfg, int episodes,
                                   std::uint64_t seed, double lambda = 1.0);

/// Mean refine_loss of a denoiser over samples, with D = x0_hat - x_k.
double evaluate_denoiser(const Denoiser& denoiser, std::span<const DenoiserSample> samples,
                         const DenoiseSchedule& schedule);

}  // namespace gaf
