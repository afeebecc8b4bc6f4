#include "gaf/harness.hpp"

#include "gaf/metrics.hpp"
#include "gaf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>

namespace gaf {

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;
constexpr double kBodyOpacityLogit = 2.5;
constexpr double kCloseDistance = 0.05;

bool inside(const Vec3& p, const Vec3& lo, const Vec3& hi)
{
    return (p.array() >= lo.array()).all() && (p.array() <= hi.array()).all();
}

void check_twist(const Twist& xi, const char* who)
{
    if (!xi.allFinite()) throw SpecError(std::string(who) + ": non-finite twist");
    if (xi.head<3>().norm() >= 45.0 * kDeg) throw SpecError(std::string(who) + ": twist rotates 45 degrees or more");
}

Se3 rot_y(double angle) { return Se3::from_rotation(Quaternion::from_axis_angle({0, 1, 0}, angle)); }

std::uint64_t mix(std::uint64_t a, std::uint64_t b)
{
    std::uint64_t h = a * 0x9E3779B97F4A7C15ull ^ (b + 0x632BE59BD9B4E019ull + (a << 6) + (a >> 2));
    h ^= h >> 31;
    h *= 0xBF58476D1CE4E5B9ull;
    return h ^ (h >> 29);
}

// A textured ellipsoidal blob in its body frame.
std::vector<GaussianPoint> object_points(const ObjectSpec& o, std::uint64_t seed)
{
    std::mt19937_64 rng(seed);
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const double volume = 4.0 / 3.0 * std::numbers::pi * o.radii.prod();
    const double sigma = std::clamp(0.6 * std::cbrt(volume / std::max(o.count, 1)), 0.015, 0.08);
    std::vector<GaussianPoint> pts;
    while (int(pts.size()) < o.count) {
        const Vec3 s{u(rng), u(rng), u(rng)};
        if (s.squaredNorm() > 1.0) continue;
        GaussianPoint p;
        p.mean = s.cwiseProduct(o.radii);
        const double shade = 0.75 + 0.25 * s.y() + 0.1 * u(rng);
        p.color = (o.color * shade + Vec3::Constant(0.08 * s.x())).cwiseMax(0.0).cwiseMin(1.0);
        p.opacity_logit = kBodyOpacityLogit;
        p.log_scale = Vec3::Constant(std::log(sigma));
        p.label = o.label;
        pts.push_back(p);
    }
    return pts;
}

struct Body {
    std::vector<GaussianPoint> points;  // world frame at t
    Se3 pose;
    Twist twist;
};

std::vector<Body> build_bodies(const SceneSpec& spec)
{
    std::vector<Body> bodies;
    const auto prim = pose_primitive(gripper_primitive(spec.gripper.count, spec.gripper.extent), spec.gripper.pose);
    bodies.push_back({prim.points, spec.gripper.pose, spec.gripper.twist});
    for (std::size_t i = 0; i < spec.objects.size(); ++i) {
        const auto& o = spec.objects[i];
        GaussianField local;
        local.points = object_points(o, mix(spec.seed, i + 1));
        bodies.push_back({pose_primitive(local, o.pose).points, o.pose, o.twist});
    }
    for (std::size_t a = 0; a < bodies.size(); ++a) {
        for (std::size_t b = a + 1; b < bodies.size(); ++b) {
            for (const auto& p : bodies[a].points) {
                for (const auto& q : bodies[b].points) {
                    if ((p.mean - q.mean).norm() < kBodyMargin) {
                        throw SpecError("bodies " + std::to_string(a) + " and " + std::to_string(b) + " overlap");
                    }
                }
            }
        }
    }
    return bodies;
}

GaussianField assemble(const std::vector<Body>& bodies, bool with_motion)
{
    GaussianField f;
    for (const auto& b : bodies) {
        for (auto p : b.points) {
            p.displacement = with_motion ? body_displacement(p.mean, b.pose, b.twist) : Vec3::Zero();
            f.points.push_back(p);
        }
    }
    return f;
}

bool is_gripper(const GaussianPoint& p) { return p.label == static_cast<std::uint8_t>(Label::Gripper); }

void move_gripper(GaussianField& f, const Se3& world_motion)
{
    for (auto& p : f.points) {
        if (!is_gripper(p)) continue;
        p.mean = world_motion.apply(p.mean);
        p.rotation = world_motion.rotation * p.rotation;
    }
}

double mean_psnr(const GaussianField& f, const SupervisionSet& sup, const RenderConfig& cfg)
{
    double sum = 0.0;
    for (const auto& v : sup.current) sum += compute_psnr(render(f, v.camera, cfg).image, v.image);
    const auto future = advance(f, 1.0);
    for (const auto& v : sup.future) sum += compute_psnr(render(future, v.camera, cfg).image, v.image);
    return sum / double(sup.current.size() + sup.future.size());
}

std::vector<Se3> motions_of(const ActionSequence& seq)
{
    std::vector<Se3> m;
    for (const auto& s : seq.steps) m.push_back(s.motion);
    return m;
}

}  // namespace

void SceneSpec::validate() const
{
    if (!((bbox_max.array() > bbox_min.array()).all())) throw SpecError("empty bounding box");
    if (cameras.empty()) throw SpecError("scene needs at least one supervision camera");
    for (const auto& c : cameras) c.validate();
    for (const auto& c : held_out) c.validate();
    if (gripper.count < 8) throw SpecError("gripper needs at least 8 Gaussians");
    if (!(gripper.extent > 0.0)) throw SpecError("gripper extent must be positive");
    check_twist(gripper.twist, "gripper");
    if (!inside(gripper.pose.translation, bbox_min, bbox_max)) throw SpecError("gripper outside the bounding box");
    for (const auto& o : objects) {
        if (o.count < 1) throw SpecError("object needs at least one Gaussian");
        if (!((o.radii.array() > 0.0).all())) throw SpecError("object radii must be positive");
        if (o.label == static_cast<std::uint8_t>(Label::Gripper)) throw SpecError("objects may not use the gripper label");
        check_twist(o.twist, "object");
    }
}

std::vector<Camera> ring_rig(int count, double azimuth_start_deg, double azimuth_step_deg, double elevation,
                             double distance, double focal, int width, int height)
{
    std::vector<Camera> rig;
    for (int i = 0; i < count; ++i) {
        const double az = (azimuth_start_deg + i * azimuth_step_deg) * kDeg;
        const double el = elevation * kDeg;
        const Vec3 eye = distance * Vec3{std::cos(el) * std::sin(az), std::sin(el), -std::cos(el) * std::cos(az)};
        rig.push_back(Camera::look_at(eye, Vec3::Zero(), Vec3{0, 1, 0}, focal, width, height));
    }
    return rig;
}

SceneSpec default_scene_spec()
{
    SceneSpec s;
    s.seed = 1;
    s.gripper.pose = Se3::from_translation({0.0, 0.25, 0.0});
    s.gripper.twist << 0.0, 5.0 * kDeg, 0.0, 0.04, -0.03, 0.02;
    ObjectSpec o;
    o.pose = Se3::from_translation({0.0, -0.45, 0.0});
    s.objects.push_back(o);
    s.cameras = ring_rig(2, -45.0, 90.0, 25.0, 3.0, 100.0, 64, 64);
    s.held_out = ring_rig(1, 10.0, 0.0, 35.0, 3.0, 100.0, 64, 64);
    s.goal = Se3::from_translation({0.0, 0.0, 0.0});
    return s;
}

SceneSpec dense_scene_spec()
{
    SceneSpec s = default_scene_spec();
    s.gripper.count = 96;
    s.objects[0].count = 104;
    s.objects[0].twist << 0.0, 0.0, 0.0, 0.03, 0.0, 0.0;
    s.cameras = ring_rig(4, -67.5, 45.0, 25.0, 3.0, 100.0, 64, 64);
    s.held_out = ring_rig(1, 0.0, 0.0, 40.0, 3.0, 100.0, 64, 64);
    return s;
}

GaussianField gripper_primitive(int count, double extent)
{
    if (count < 8) throw SpecError("gripper needs at least 8 Gaussians");
    const int per_row = count / 2;
    const int finger = std::max(1, int(std::round(0.3 * per_row)));
    const int palm = per_row - 2 * finger;
    const double half = 0.5 * extent;
    const double finger_len = 0.6 * extent;
    const double depth = 0.06 * extent;
    const double spacing = std::min(extent / std::max(palm - 1, 1), finger_len / finger);
    const double sigma = std::max(0.7 * spacing, 0.01);

    GaussianField f;
    auto add = [&](const Vec3& pos, const Vec3& color) {
        GaussianPoint p;
        p.mean = pos;
        p.color = color;
        p.opacity_logit = kBodyOpacityLogit;
        p.log_scale = Vec3::Constant(std::log(sigma));
        p.label = static_cast<std::uint8_t>(Label::Gripper);
        f.points.push_back(p);
    };
    for (int row = 0; row < 2; ++row) {
        const double z = row == 0 ? -depth : depth;
        for (int i = 0; i < palm; ++i) {
            const double s = palm > 1 ? double(i) / (palm - 1) : 0.5;
            add({-half + s * extent, 0.0, z}, {0.9, 0.2 + 0.6 * s, 0.1});
        }
        for (int side = 0; side < 2; ++side) {
            const double x = side == 0 ? -half : half;
            for (int i = 0; i < finger; ++i) {
                const double s = double(i + 1) / finger;
                const Vec3 color = side == 0 ? Vec3{0.1, 0.3 + 0.5 * s, 0.9} : Vec3{0.6 + 0.3 * s, 0.1 + 0.4 * s, 0.8};
                add({x, -s * finger_len, z}, color);
            }
        }
    }
    // odd counts: one extra point at the palm center
    if (int(f.size()) < count) add({0.0, 0.0, 0.0}, {0.9, 0.5, 0.1});
    return f;
}

Vec3 body_displacement(const Vec3& mu, const Se3& pose, const Twist& twist)
{
    const Se3 world = se3_compose(pose, se3_compose(se3_exp(twist), pose.inverse()));
    return world.apply(mu) - mu;
}

SupervisionSet render_supervision(const GaussianField& field, const std::vector<Camera>& cameras,
                                  const RenderConfig& cfg)
{
    SupervisionSet sup;
    const GaussianField future = advance(field, 1.0);
    for (const auto& cam : cameras) {
        sup.current.push_back({cam, render(field, cam, cfg).image});
        sup.future.push_back({cam, render(future, cam, cfg).image});
    }
    return sup;
}

GeneratedScene generate_scene(const SceneSpec& spec)
{
    spec.validate();
    GeneratedScene out;
    out.field = assemble(build_bodies(spec), true);
    out.supervision = render_supervision(out.field, spec.cameras);
    const auto held = render_supervision(out.field, spec.held_out);
    out.held_out_current = held.current;
    out.held_out_future = held.future;
    return out;
}

// Closed loop ---------------------------------------------------------------------

ControllerConfig::ControllerConfig()
{
    icp.correspondence = Correspondence::PairedByIndex;
    first_fit.iterations = 300;
    warm_fit.iterations = 60;
}

void ControllerConfig::validate() const
{
    if (horizon < 1) throw std::invalid_argument("horizon must be at least 1");
    if (budget < 0) throw std::invalid_argument("budget must be non-negative");
    if (!(max_cycle_translation > 0.0) || !(max_cycle_rotation_deg > 0.0)) {
        throw std::invalid_argument("per-cycle motion limits must be positive");
    }
    if (actuation_noise < 0.0) throw std::invalid_argument("actuation noise must be non-negative");
    if (denoiser == DenoiserKind::Ridge && ridge == nullptr) throw std::invalid_argument("ridge denoiser not provided");
    schedule.validate();
    first_fit.validate();
    warm_fit.validate();
}

EpisodeState initial_state(const SceneSpec& spec)
{
    spec.validate();
    EpisodeState s;
    s.field = assemble(build_bodies(spec), false);
    s.gripper_pose = spec.gripper.pose;
    s.goal = spec.goal;
    s.bbox_min = spec.bbox_min;
    s.bbox_max = spec.bbox_max;
    return s;
}

EpisodeState execute(const EpisodeState& state, const Se3& step, double gripper, double noise_sigma,
                     std::mt19937_64* rng)
{
    EpisodeState next = state;
    Se3 pose = se3_compose(state.gripper_pose, step);
    if (noise_sigma > 0.0 && rng != nullptr) {
        std::normal_distribution<double> n(0.0, noise_sigma);
        pose.translation += Vec3{n(*rng), n(*rng), n(*rng)};
    }
    move_gripper(next.field, se3_compose(pose, state.gripper_pose.inverse()));
    next.gripper_pose = pose;
    next.gripper_command = gripper;
    next.steps = state.steps + 1;
    if (!inside(pose.translation, state.bbox_min, state.bbox_max)) next.failed = true;
    return next;
}

Se3 expert_motion(const Se3& pose, const Se3& goal, const ControllerConfig& cfg)
{
    const Se3 a = se3_compose(pose.inverse(), goal);
    const double t = a.translation.norm();
    const double r = a.angle();
    double tau = 1.0;
    if (t > cfg.max_cycle_translation) tau = std::min(tau, cfg.max_cycle_translation / t);
    if (r > cfg.max_cycle_rotation_deg * kDeg) tau = std::min(tau, cfg.max_cycle_rotation_deg * kDeg / r);
    if (tau == 1.0) return a;
    Se3 m = se3_interpolate(a, tau);
    // screw paths do not scale translation linearly in tau
    for (int i = 0; i < 50 && m.translation.norm() > cfg.max_cycle_translation; ++i) {
        tau *= cfg.max_cycle_translation / m.translation.norm() * (1.0 - 1e-12);
        m = se3_interpolate(a, tau);
    }
    return m;
}

NoisyAction expert_action(const Se3& pose, const Se3& goal, const ControllerConfig& cfg)
{
    const Se3 m = expert_motion(pose, goal, cfg);
    const InitAction split = interpolate_action(m, cfg.horizon);
    ActionSequence seq;
    Se3 p = pose;
    for (const auto& s : split.steps) {
        p = se3_compose(p, s);
        seq.steps.push_back({s, (p.translation - goal.translation).norm() < kCloseDistance ? 1.0 : 0.0});
    }
    return to_diffusion_space(seq, cfg.refine.normalization);
}

GaussianField observed_field(const EpisodeState& state, const ControllerConfig& cfg)
{
    const Se3 m = expert_motion(state.gripper_pose, state.goal, cfg);
    const Se3 world = se3_compose(state.gripper_pose, se3_compose(m, state.gripper_pose.inverse()));
    GaussianField f = state.field;
    for (auto& p : f.points) p.displacement = is_gripper(p) ? Vec3(world.apply(p.mean) - p.mean) : Vec3::Zero();
    return f;
}

EpisodeReport run_episode(const SceneSpec& spec, const ControllerConfig& cfg)
{
    cfg.validate();
    EpisodeState state = initial_state(spec);
    std::mt19937_64 rng(mix(spec.seed, 0xac7));

    RefineConfig rcfg = cfg.refine;
    if (rcfg.primitive.empty()) rcfg.primitive = gripper_primitive(spec.gripper.count, spec.gripper.extent);

    auto done = [&](const PoseError& e) {
        return e.translation < cfg.success_translation && e.rotation_deg < cfg.success_rotation_deg;
    };

    EpisodeReport report;
    report.final_error = pose_error(state.gripper_pose, state.goal);
    report.success = done(report.final_error);

    std::optional<GaussianField> fitted;
    Se3 last_motion;
    for (int cycle = 0; cycle < cfg.budget && !report.success; ++cycle) {
        CycleMetrics m;
        m.cycle = cycle;
        const GaussianField truth = observed_field(state, cfg);

        GaussianField perceived;
        if (cfg.mode == PerceptionMode::GroundTruth) {
            perceived = truth;
        } else {
            const SupervisionSet sup = render_supervision(truth, spec.cameras, cfg.first_fit.render);
            GaussianField start;
            FitConfig fcfg;
            if (!fitted) {
                std::normal_distribution<double> n(0.0, cfg.init_position_noise);
                std::vector<Vec3> centers;
                std::vector<std::uint8_t> labels;
                for (const auto& p : truth.points) {
                    centers.push_back(p.mean + Vec3{n(rng), n(rng), n(rng)});
                    labels.push_back(p.label);
                }
                start = initialize_field(centers, labels);
                fcfg = cfg.first_fit;
            } else {
                start = *fitted;
                move_gripper(start, last_motion);
                for (auto& p : start.points) p.displacement = Vec3::Zero();
                fcfg = cfg.warm_fit;
            }
            fcfg.seed = mix(spec.seed, std::uint64_t(cycle));
            fitted = fit(start, sup, fcfg).field;
            perceived = *fitted;
            m.fit_psnr = mean_psnr(perceived, sup, fcfg.render);
        }

        const auto gripper_label = static_cast<std::uint8_t>(Label::Gripper);
        LabeledSubset sub;
        try {
            sub = extract_subset(perceived, gripper_label, cfg.min_opacity);
        } catch (const EmptySubsetError&) {
            sub = extract_subset(perceived, gripper_label);
        }
        const IcpResult reg = icp(sub.positions, sub.future_positions, cfg.icp);
        m.icp_rms = reg.rms;
        const InitAction init = to_body_frame(interpolate_action(reg.transform, cfg.horizon), state.gripper_pose);
        m.init_error = pose_error(compose_body_steps(init.steps), expert_motion(state.gripper_pose, state.goal, cfg));

        const NoisyAction target = expert_action(state.gripper_pose, state.goal, cfg);
        const OracleDenoiser oracle(target);
        const Denoiser& denoiser =
            cfg.denoiser == DenoiserKind::Oracle ? static_cast<const Denoiser&>(oracle) : *cfg.ridge;
        if (cfg.on_guidance) {
            rcfg.on_guidance = [&](int level, const std::vector<GuidanceImage>& g) { cfg.on_guidance(cycle, level, g); };
        }
        const ActionSequence seq =
            refine_action(init, perceived, state.gripper_pose, spec.cameras, denoiser, cfg.schedule, rcfg);

        const Se3 before = state.gripper_pose;
        for (const auto& step : seq.steps) {
            state = execute(state, step.motion, step.gripper, cfg.actuation_noise, &rng);
            if (state.failed) break;
        }
        last_motion = se3_compose(state.gripper_pose, before.inverse());

        m.pose_error = pose_error(state.gripper_pose, state.goal);
        report.per_cycle.push_back(m);
        report.cycles = cycle + 1;
        report.final_error = m.pose_error;
        if (state.failed) {
            report.out_of_bounds = true;
            break;
        }
        report.success = done(m.pose_error);
    }
    report.steps = state.steps;
    return report;
}

SceneSpec task_at(const SceneSpec& base, const Vec3& target, std::uint64_t seed)
{
    std::mt19937_64 rng(mix(seed, 0x7a5c));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> unit(0.0, 1.0);

    SceneSpec s = base;
    s.seed = seed;
    const double yaw = 30.0 * kDeg * u(rng);
    s.goal = se3_compose(Se3::from_translation(target), rot_y(yaw));

    Vec3 axis{u(rng), u(rng), u(rng)};
    while (axis.norm() < 1e-3) axis = {u(rng), u(rng), u(rng)};
    const double tilt = 25.0 * kDeg * unit(rng);
    const Vec3 offset{0.15 * u(rng), 0.1 + 0.15 * unit(rng), 0.15 * u(rng)};
    s.gripper.pose = Se3{(s.goal.rotation * Quaternion::from_axis_angle(axis, tilt)).canonical(),
                         s.goal.translation + offset};
    s.gripper.twist = Twist::Zero();

    ObjectSpec o = base.objects.empty() ? ObjectSpec{} : base.objects.front();
    o.pose = se3_compose(Se3::from_translation(target - Vec3{0.0, 0.45, 0.0}), rot_y(yaw));
    o.twist = Twist::Zero();
    s.objects = {o};
    return s;
}

SceneSpec random_task(const SceneSpec& base, std::uint64_t seed)
{
    std::mt19937_64 rng(mix(seed, 0x9041));
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    const Vec3 target{0.25 * u(rng), 0.025 + 0.075 * u(rng), 0.25 * u(rng)};
    return task_at(base, target, seed);
}

std::vector<SweepCell> sweep(const SceneSpec& base, const SweepGrid& grid, const ControllerConfig& cfg)
{
    if (grid.nx < 1 || grid.nz < 1) throw std::invalid_argument("sweep grid needs at least one cell");
    cfg.validate();
    std::vector<SweepCell> cells(std::size_t(grid.nx * grid.nz));
    for (int iz = 0; iz < grid.nz; ++iz) {
        for (int ix = 0; ix < grid.nx; ++ix) {
            auto& c = cells[std::size_t(iz * grid.nx + ix)];
            c.ix = ix;
            c.iz = iz;
            const double fx = grid.nx > 1 ? double(ix) / (grid.nx - 1) : 0.5;
            const double fz = grid.nz > 1 ? double(iz) / (grid.nz - 1) : 0.5;
            c.goal = {grid.lower.x() + fx * (grid.upper.x() - grid.lower.x()), grid.lower.y(),
                      grid.lower.z() + fz * (grid.upper.z() - grid.lower.z())};
        }
    }
    parallel_for(cells.size(), [&](std::size_t i) {
        cells[i].report = run_episode(task_at(base, cells[i].goal, base.seed + i), cfg);
    });
    return cells;
}

std::vector<DenoiserSample> collect_denoiser_samples(const SceneSpec& base, const ControllerConfig& cfg,
                                                     int episodes, std::uint64_t seed, int draws)
{
    if (draws < 1) throw std::invalid_argument("collect_denoiser_samples: draws must be at least 1");
    cfg.schedule.validate();
    const GaussianField primitive =
        cfg.refine.primitive.empty() ? gripper_primitive(base.gripper.count, base.gripper.extent) : cfg.refine.primitive;

    std::vector<std::vector<DenoiserSample>> per_episode(std::size_t(std::max(episodes, 0)));
    parallel_for(per_episode.size(), [&](std::size_t e) {
        const SceneSpec task = random_task(base, mix(seed, e));
        EpisodeState state = initial_state(task);
        for (int cycle = 0; cycle < cfg.budget; ++cycle) {
            const NoisyAction x0 = expert_action(state.gripper_pose, state.goal, cfg);
            for (int k = 0; k < cfg.schedule.size() * draws; ++k) {
                const int level = k % cfg.schedule.size();
                const std::uint64_t s = mix(mix(seed, e), std::uint64_t(cycle * 4096 + k));
                NoisedAction noised = add_noise(x0, level, cfg.schedule, s);
                const Se3 candidate =
                    compose_body_steps(motions_of(from_diffusion_space(noised.action, cfg.refine.normalization)));
                DenoiserSample sample;
                sample.guidance = render_action_guidance(state.field, state.gripper_pose, candidate, task.cameras,
                                                         primitive, cfg.refine.render);
                sample.noisy = std::move(noised.action);
                sample.noise = std::move(noised.noise);
                sample.gripper = x0.gripper;
                per_episode[e].push_back(std::move(sample));
            }
            for (const auto& step : from_diffusion_space(x0, cfg.refine.normalization).steps) {
                state = execute(state, step.motion, step.gripper);
            }
            const PoseError err = pose_error(state.gripper_pose, state.goal);
            if (err.translation < cfg.success_translation && err.rotation_deg < cfg.success_rotation_deg) break;
        }
    });

    std::vector<DenoiserSample> all;
    for (auto& v : per_episode) std::move(v.begin(), v.end(), std::back_inserter(all));
    return all;
}

RidgeDenoiser train_ridge_denoiser(const SceneSpec& base, const ControllerConfig& cfg, int episodes,
                                   std::uint64_t seed, double lambda)
{
    const auto samples = collect_denoiser_samples(base, cfg, episodes, seed);
    return RidgeDenoiser::train(samples, cfg.schedule.size(), lambda);
}

double evaluate_denoiser(const Denoiser& denoiser, std::span<const DenoiserSample> samples,
                         const DenoiseSchedule& schedule)
{
    if (samples.empty()) throw std::invalid_argument("evaluate_denoiser: no samples");
    double total = 0.0;
    for (const auto& s : samples) {
        const DenoiserOutput out = denoiser.predict(s.noisy, s.guidance, schedule);
        const Eigen::VectorXd xk = s.noisy.flat();
        const double ab = schedule.alpha_bar.at(std::size_t(s.noisy.level));
        const Eigen::VectorXd x0 = (xk - std::sqrt(1.0 - ab) * s.noise) / std::sqrt(ab);
        const Eigen::VectorXd d = predict_clean(s.noisy, out.noise, schedule) - xk;
        const Eigen::VectorXd g = Eigen::Map<const Eigen::VectorXd>(out.gripper.data(), Eigen::Index(out.gripper.size()));
        const Eigen::VectorXd g_gt = Eigen::Map<const Eigen::VectorXd>(s.gripper.data(), Eigen::Index(s.gripper.size()));
        total += refine_loss(d, x0 - xk, out.noise, s.noise, g, g_gt).value;
    }
    return total / double(samples.size());
}

}  // namespace gaf
