#include "gaf/refine.hpp"

#include <Eigen/Cholesky>

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>

namespace gaf {

Eigen::VectorXd NoisyAction::flat() const
{
    Eigen::VectorXd v(6 * steps.size());
    for (std::size_t i = 0; i < steps.size(); ++i) v.segment<6>(Eigen::Index(6 * i)) = steps[i];
    return v;
}

void NoisyAction::set_flat(const Eigen::VectorXd& v)
{
    if (v.size() != Eigen::Index(6 * steps.size())) throw std::invalid_argument("NoisyAction: size mismatch");
    for (std::size_t i = 0; i < steps.size(); ++i) steps[i] = v.segment<6>(Eigen::Index(6 * i));
}

namespace {

Twist normalize(const Twist& xi, const ActionNormalization& n)
{
    Twist out;
    out.head<3>() = xi.head<3>() / n.rotation;
    out.tail<3>() = xi.tail<3>() / n.translation;
    return out;
}

Twist denormalize(const Twist& x, const ActionNormalization& n)
{
    Twist out;
    out.head<3>() = x.head<3>() * n.rotation;
    out.tail<3>() = x.tail<3>() * n.translation;
    return out;
}

}  // namespace

NoisyAction to_diffusion_space(const ActionSequence& seq, const ActionNormalization& norm)
{
    NoisyAction x;
    for (const auto& s : seq.steps) {
        x.steps.push_back(normalize(se3_log(s.motion), norm));
        x.gripper.push_back(s.gripper);
    }
    return x;
}

NoisyAction to_diffusion_space(const InitAction& init, const ActionNormalization& norm)
{
    NoisyAction x;
    for (const auto& s : init.steps) {
        x.steps.push_back(normalize(se3_log(s), norm));
        x.gripper.push_back(0.0);
    }
    return x;
}

ActionSequence from_diffusion_space(const NoisyAction& x, const ActionNormalization& norm)
{
    ActionSequence seq;
    for (std::size_t i = 0; i < x.steps.size(); ++i) {
        seq.steps.push_back({se3_exp(denormalize(x.steps[i], norm)), i < x.gripper.size() ? x.gripper[i] : 0.0});
    }
    return seq;
}

DenoiseSchedule DenoiseSchedule::cosine(int steps)
{
    if (steps < 1) throw std::invalid_argument("cosine schedule needs at least one level");
    constexpr double s = 0.008;
    auto f = [](double t) {
        const double c = std::cos((t + s) / (1.0 + s) * std::numbers::pi / 2.0);
        return c * c;
    };
    DenoiseSchedule sched;
    sched.alpha_bar.push_back(kFirst);
    for (int k = 1; k < steps; ++k) sched.alpha_bar.push_back(f(double(k) / steps) / f(0.0));
    return sched;
}

DenoiseSchedule DenoiseSchedule::strided(int count, int stride) const
{
    if (count < 1 || stride < 1 || (count - 1) * stride >= size()) {
        throw std::invalid_argument("strided schedule outside the base schedule");
    }
    DenoiseSchedule out;
    for (int i = 0; i < count; ++i) out.alpha_bar.push_back(alpha_bar[std::size_t(i * stride)]);
    return out;
}

DenoiseSchedule DenoiseSchedule::inference() { return cosine(50).strided(3, 2); }

void DenoiseSchedule::validate() const
{
    if (alpha_bar.empty()) throw std::invalid_argument("empty denoise schedule");
    for (double a : alpha_bar) {
        if (!(a > 0.0 && a < 1.0)) throw std::invalid_argument("denoise schedule coefficients must lie in (0, 1)");
    }
}

bool DenoiseSchedule::strictly_decreasing() const
{
    for (std::size_t k = 1; k < alpha_bar.size(); ++k)
        if (!(alpha_bar[k] < alpha_bar[k - 1])) return false;
    return true;
}

NoisedAction add_noise(const NoisyAction& clean, int level, const DenoiseSchedule& schedule, std::uint64_t seed)
{
    if (level < 0 || level >= schedule.size()) throw std::invalid_argument("add_noise: level out of range");
    const double ab = schedule.alpha_bar[std::size_t(level)];
    std::mt19937_64 rng(seed);
    std::normal_distribution<double> normal(0.0, 1.0);
    const Eigen::VectorXd x0 = clean.flat();
    Eigen::VectorXd eps(x0.size());
    for (Eigen::Index i = 0; i < eps.size(); ++i) eps[i] = normal(rng);

    NoisedAction out{clean, eps};
    out.action.level = level;
    out.action.set_flat(std::sqrt(ab) * x0 + std::sqrt(1.0 - ab) * eps);
    return out;
}

Eigen::VectorXd predict_clean(const NoisyAction& x, const Eigen::VectorXd& eps_hat, const DenoiseSchedule& schedule)
{
    if (x.level < 0 || x.level >= schedule.size()) throw std::invalid_argument("predict_clean: level out of range");
    const double ab = schedule.alpha_bar[std::size_t(x.level)];
    return (x.flat() - std::sqrt(1.0 - ab) * eps_hat) / std::sqrt(ab);
}

NoisyAction ddim_step(const NoisyAction& x, const Eigen::VectorXd& eps_hat, const DenoiseSchedule& schedule)
{
    if (x.level < 1) throw std::invalid_argument("ddim_step: already at level 0");
    const Eigen::VectorXd x0 = predict_clean(x, eps_hat, schedule);
    const double prev = schedule.alpha_bar[std::size_t(x.level - 1)];
    NoisyAction out = x;
    out.level = x.level - 1;
    out.set_flat(std::sqrt(prev) * x0 + std::sqrt(1.0 - prev) * eps_hat);
    return out;
}

// Guidance ---------------------------------------------------------------------

GaussianField pose_primitive(const GaussianField& primitive, const Se3& pose)
{
    GaussianField out = primitive;
    for (auto& p : out.points) {
        p.mean = pose.apply(p.mean);
        p.displacement = Vec3::Zero();
        p.rotation = pose.rotation * p.rotation;
    }
    return out;
}

namespace {

std::vector<std::uint8_t> mask_from(const RenderOutput& r)
{
    std::vector<std::uint8_t> mask(r.transmittance.size());
    for (std::size_t i = 0; i < mask.size(); ++i) mask[i] = (1.0 - r.transmittance[i]) >= 0.5 ? 1 : 0;
    return mask;
}

std::vector<GuidanceImage> overlay(std::span<const Image> base, const GaussianField& posed,
                                   std::span<const Camera> cameras, const RenderConfig& cfg)
{
    RenderConfig ocfg = cfg;
    ocfg.background = Vec3::Zero();
    std::vector<GuidanceImage> out;
    out.reserve(cameras.size());
    for (std::size_t v = 0; v < cameras.size(); ++v) {
        const RenderOutput r = render(posed, cameras[v], ocfg);
        GuidanceImage g;
        g.image = base[v];
        for (std::size_t i = 0; i < r.transmittance.size(); ++i) {
            for (int c = 0; c < 3; ++c) {
                g.image.data[i * 3 + std::size_t(c)] = r.image.data[i * 3 + std::size_t(c)] +
                                                       r.transmittance[i] * base[v].data[i * 3 + std::size_t(c)];
            }
        }
        g.mask = mask_from(r);
        out.push_back(std::move(g));
    }
    return out;
}

std::vector<Image> render_bases(const GaussianField& scene, std::span<const Camera> cameras, const RenderConfig& cfg)
{
    std::vector<Image> base;
    for (const auto& cam : cameras) base.push_back(render(scene, cam, cfg).image);
    return base;
}

}  // namespace

std::vector<std::uint8_t> footprint_mask(const GaussianField& field, const Camera& cam, const RenderConfig& cfg)
{
    RenderConfig ocfg = cfg;
    ocfg.background = Vec3::Zero();
    return mask_from(render(field, cam, ocfg));
}

std::vector<GuidanceImage> render_action_guidance(const GaussianField& scene, const Se3& gripper_pose,
                                                  const Se3& action, std::span<const Camera> cameras,
                                                  const GaussianField& primitive, const RenderConfig& cfg)
{
    const auto base = render_bases(scene, cameras, cfg);
    return overlay(base, pose_primitive(primitive, se3_compose(gripper_pose, action)), cameras, cfg);
}

// Denoisers --------------------------------------------------------------------

DenoiserOutput OracleDenoiser::predict(const NoisyAction& x, std::span<const GuidanceImage>,
                                       const DenoiseSchedule& schedule) const
{
    if (x.horizon() != clean_.horizon()) throw ShapeError("oracle denoiser: horizon mismatch");
    const double ab = schedule.alpha_bar.at(std::size_t(x.level));
    DenoiserOutput out;
    out.noise = (x.flat() - std::sqrt(ab) * clean_.flat()) / std::sqrt(1.0 - ab);
    for (double g : clean_.gripper) out.gripper.push_back(std::clamp(g, kProbabilityGuard, 1.0 - kProbabilityGuard));
    return out;
}

Eigen::VectorXd denoiser_features(const NoisyAction& x, std::span<const GuidanceImage> guidance)
{
    constexpr int kGrid = 8;
    const Eigen::VectorXd a = x.flat();
    const Eigen::Index n = 1 + 2 * a.size() + Eigen::Index(guidance.size()) * 2 * kGrid * kGrid;
    Eigen::VectorXd f = Eigen::VectorXd::Zero(n);
    f[0] = 1.0;
    f.segment(1, a.size()) = a;
    f.segment(1 + a.size(), a.size()) = a.cwiseAbs();
    Eigen::Index o = 1 + 2 * a.size();
    for (const auto& g : guidance) {
        const int w = g.image.width, h = g.image.height;
        std::vector<double> mask_sum(kGrid * kGrid, 0.0), luma_sum(kGrid * kGrid, 0.0), count(kGrid * kGrid, 0.0);
        for (int y = 0; y < h; ++y) {
            for (int xx = 0; xx < w; ++xx) {
                const int cell = (y * kGrid / h) * kGrid + (xx * kGrid / w);
                const std::size_t pix = std::size_t(y) * w + xx;
                mask_sum[std::size_t(cell)] += g.mask[pix];
                luma_sum[std::size_t(cell)] += (g.image.data[pix * 3] + g.image.data[pix * 3 + 1] + g.image.data[pix * 3 + 2]) / 3.0;
                count[std::size_t(cell)] += 1.0;
            }
        }
        for (int c = 0; c < kGrid * kGrid; ++c) {
            const double k = count[std::size_t(c)] > 0 ? 1.0 / count[std::size_t(c)] : 0.0;
            f[o + c] = mask_sum[std::size_t(c)] * k;
            f[o + kGrid * kGrid + c] = luma_sum[std::size_t(c)] * k;
        }
        o += 2 * kGrid * kGrid;
    }
    return f;
}

RidgeDenoiser RidgeDenoiser::train(std::span<const DenoiserSample> samples, int levels, double lambda)
{
    if (samples.empty()) throw std::invalid_argument("ridge denoiser: no samples");
    if (levels < 1) throw std::invalid_argument("ridge denoiser: need at least one level");
    RidgeDenoiser model;
    for (int level = 0; level < levels; ++level) {
        std::vector<const DenoiserSample*> rows;
        for (const auto& s : samples)
            if (s.noisy.level == level) rows.push_back(&s);
        if (rows.empty()) throw std::invalid_argument("ridge denoiser: no samples for level " + std::to_string(level));

        const Eigen::VectorXd f0 = denoiser_features(rows[0]->noisy, rows[0]->guidance);
        const Eigen::Index d = f0.size();
        const Eigen::Index dof = rows[0]->noise.size();
        const Eigen::Index o = dof + Eigen::Index(rows[0]->gripper.size());
        Eigen::MatrixXd XtX = Eigen::MatrixXd::Zero(d, d);
        Eigen::MatrixXd XtY = Eigen::MatrixXd::Zero(d, o);
        for (const auto* s : rows) {
            const Eigen::VectorXd f = denoiser_features(s->noisy, s->guidance);
            if (f.size() != d || s->noise.size() != dof || Eigen::Index(dof + s->gripper.size()) != o) {
                throw ShapeError("ridge denoiser: inconsistent sample shapes");
            }
            Eigen::VectorXd y(o);
            y.head(dof) = s->noise;
            for (std::size_t j = 0; j < s->gripper.size(); ++j) y[dof + Eigen::Index(j)] = s->gripper[j];
            XtX.selfadjointView<Eigen::Lower>().rankUpdate(f);
            XtY += f * y.transpose();
        }
        XtX = XtX.selfadjointView<Eigen::Lower>();
        XtX.diagonal().array() += lambda;
        model.weights_.push_back(XtX.ldlt().solve(XtY).transpose());
    }
    return model;
}

DenoiserOutput RidgeDenoiser::predict(const NoisyAction& x, std::span<const GuidanceImage> guidance,
                                      const DenoiseSchedule&) const
{
    if (x.level < 0 || x.level >= levels()) throw ShapeError("ridge denoiser: level not trained");
    const Eigen::MatrixXd& W = weights_[std::size_t(x.level)];
    const Eigen::VectorXd f = denoiser_features(x, guidance);
    if (f.size() != W.cols()) throw ShapeError("ridge denoiser: feature size mismatch");
    const Eigen::VectorXd y = W * f;
    const Eigen::Index dof = 6 * x.horizon();
    if (y.size() != dof + x.horizon()) throw ShapeError("ridge denoiser: output size mismatch");
    DenoiserOutput out;
    out.noise = y.head(dof);
    for (Eigen::Index j = 0; j < x.horizon(); ++j) {
        out.gripper.push_back(std::clamp(y[dof + j], kProbabilityGuard, 1.0 - kProbabilityGuard));
    }
    return out;
}

// Refinement ---------------------------------------------------------------------

ActionSequence refine_action(const InitAction& init, const GaussianField& scene, const Se3& gripper_pose,
                             std::span<const Camera> cameras, const Denoiser& denoiser,
                             const DenoiseSchedule& schedule, const RefineConfig& cfg)
{
    schedule.validate();
    if (init.steps.empty()) throw std::invalid_argument("refine_action: empty init action");
    const auto base = render_bases(scene, cameras, cfg.render);

    NoisyAction x = to_diffusion_space(init, cfg.normalization);
    x.level = schedule.size() - 1;
    const Eigen::Index dof = 6 * x.horizon();
    for (;;) {
        std::vector<Se3> motions;
        for (const auto& s : from_diffusion_space(x, cfg.normalization).steps) motions.push_back(s.motion);
        const Se3 candidate = compose_body_steps(motions);
        const auto guidance =
            overlay(base, pose_primitive(cfg.primitive, se3_compose(gripper_pose, candidate)), cameras, cfg.render);
        if (cfg.on_guidance) cfg.on_guidance(x.level, guidance);

        const DenoiserOutput out = denoiser.predict(x, guidance, schedule);
        if (out.noise.size() != dof || int(out.gripper.size()) != x.horizon()) {
            throw ShapeError("refine_action: denoiser output shape does not match the action");
        }
        x.gripper = out.gripper;
        if (x.level == 0) {
            x.set_flat(predict_clean(x, out.noise, schedule));
            break;
        }
        x = ddim_step(x, out.noise, schedule);
    }

    ActionSequence seq = from_diffusion_space(x, cfg.normalization);
    for (auto& s : seq.steps) s.gripper = s.gripper > 0.5 ? 1.0 : 0.0;
    return seq;
}

// Training loss ---------------------------------------------------------------------

RefineLoss refine_loss(const Eigen::VectorXd& direction, const Eigen::VectorXd& direction_gt,
                       const Eigen::VectorXd& noise, const Eigen::VectorXd& noise_gt,
                       const Eigen::VectorXd& gripper, const Eigen::VectorXd& gripper_gt)
{
    if (direction.size() != direction_gt.size() || noise.size() != noise_gt.size() ||
        gripper.size() != gripper_gt.size()) {
        throw ShapeError("refine_loss: prediction and target shapes differ");
    }
    auto sign = [](double v) { return double((v > 0.0) - (v < 0.0)); };

    RefineLoss out;
    out.d_direction = Eigen::VectorXd::Zero(direction.size());
    out.d_noise = Eigen::VectorXd::Zero(noise.size());
    out.d_gripper = Eigen::VectorXd::Zero(gripper.size());

    if (direction.size() > 0) {
        const double n = double(direction.size());
        for (Eigen::Index i = 0; i < direction.size(); ++i) {
            const double d = direction[i] - direction_gt[i];
            out.direction_term += std::abs(d) / n;
            out.d_direction[i] = sign(d) / n;
        }
    }
    if (noise.size() > 0) {
        const double n = double(noise.size());
        for (Eigen::Index i = 0; i < noise.size(); ++i) {
            const double d = noise[i] - noise_gt[i];
            out.noise_term += std::abs(d) / n;
            out.d_noise[i] = sign(d) / n;
        }
    }
    if (gripper.size() > 0) {
        const double n = double(gripper.size());
        for (Eigen::Index i = 0; i < gripper.size(); ++i) {
            const double raw = gripper[i];
            const double p = std::clamp(raw, kProbabilityGuard, 1.0 - kProbabilityGuard);
            const double t = gripper_gt[i];
            out.gripper_term += -(t * std::log(p) + (1.0 - t) * std::log(1.0 - p)) / n;
            const bool clamped = raw != p;
            out.d_gripper[i] = clamped ? 0.0 : ((p - t) / (p * (1.0 - p))) / n;
        }
    }
    out.value = out.direction_term + out.noise_term + out.gripper_term;
    return out;
}

}  // namespace gaf
