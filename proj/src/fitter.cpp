#include "gaf/fitter.hpp"

#include "gaf/metrics.hpp"

#include <algorithm>
#include <cmath>
#include <limits>

namespace gaf {

void SupervisionSet::validate() const
{
    if (current.empty() && future.empty()) throw std::invalid_argument("supervision has no views");
    for (const auto* views : {&current, &future}) {
        for (const auto& v : *views) {
            v.camera.validate();
            if (v.image.width != v.camera.width || v.image.height != v.camera.height) {
                throw DimensionError("supervision image does not match its camera");
            }
        }
    }
}

double LearningRates::of(ParamGroup g) const
{
    switch (g) {
    case ParamGroup::Mean: return mean;
    case ParamGroup::Displacement: return displacement;
    case ParamGroup::Color: return color;
    case ParamGroup::Opacity: return opacity;
    case ParamGroup::Rotation: return rotation;
    case ParamGroup::Scale: return scale;
    }
    return 0.0;
}

void FitConfig::validate() const
{
    if (iterations < 0) throw std::invalid_argument("fit config: iterations must be non-negative");
    for (double r : {lr.mean, lr.displacement, lr.color, lr.opacity, lr.rotation, lr.scale}) {
        if (!(r > 0.0)) throw std::invalid_argument("fit config: learning rates must be positive");
    }
    if (!(ssim_weight >= 0.0 && ssim_weight <= 1.0)) {
        throw std::invalid_argument("fit config: ssim weight must lie in [0, 1]");
    }
    render.validate();
}

PhotometricLoss photometric_loss(const Image& rendered, const Image& target, double ssim_weight)
{
    if (!rendered.same_shape(target)) throw DimensionError("photometric_loss: image dimensions differ");
    PhotometricLoss out;
    out.gradient = Image(rendered.width, rendered.height);
    const double n = double(rendered.data.size());
    double mse = 0.0;
    for (std::size_t i = 0; i < rendered.data.size(); ++i) {
        const double d = rendered.data[i] - target.data[i];
        mse += d * d;
        out.gradient.data[i] = (1.0 - ssim_weight) * 2.0 * d / n;
    }
    mse /= n;
    out.loss = (1.0 - ssim_weight) * mse;
    if (ssim_weight > 0.0) {
        const auto s = compute_ssim_with_gradient(rendered, target);
        out.loss += ssim_weight * (1.0 - s.value);
        for (std::size_t i = 0; i < rendered.data.size(); ++i) out.gradient.data[i] -= ssim_weight * s.d_first[i];
    }
    return out;
}

LossEvaluation total_loss(const GaussianField& field, const SupervisionSet& sup, const FitConfig& cfg)
{
    LossEvaluation out;
    out.delta = FieldDelta(field.size());
    for (const auto& v : sup.current) {
        const auto rendered = render(field, v.camera, cfg.render);
        const auto pl = photometric_loss(rendered.image, v.image, cfg.ssim_weight);
        out.terms.current += pl.loss;
        out.delta += render_backward(field, v.camera, cfg.render, pl.gradient);
    }
    if (!sup.future.empty()) {
        const GaussianField future = advance(field, 1.0);
        for (const auto& v : sup.future) {
            const auto rendered = render(future, v.camera, cfg.render);
            const auto pl = photometric_loss(rendered.image, v.image, cfg.ssim_weight);
            out.terms.future += pl.loss;
            out.delta += chain_through_advance(render_backward(future, v.camera, cfg.render, pl.gradient));
        }
    }
    out.terms.total = out.terms.current + out.terms.future;
    return out;
}

void adam_step(GaussianField& field, const FieldDelta& delta, AdamState& state, const FitConfig& cfg)
{
    if (delta.size() != field.size() || state.first.size() != field.size() || state.second.size() != field.size()) {
        throw std::invalid_argument("adam_step: buffers not aligned with the field");
    }
    if (!delta.all_finite()) throw NumericalError("adam_step: non-finite gradient");

    state.step += 1;
    const double bc1 = 1.0 - std::pow(kAdamBeta1, double(state.step));
    const double bc2 = 1.0 - std::pow(kAdamBeta2, double(state.step));
    const double log_floor = std::log(kScaleFloor);

    for (std::size_t i = 0; i < field.size(); ++i) {
        PointParams params = pack(field.points[i]);
        auto& m = state.first[i];
        auto& v = state.second[i];
        const auto& g = delta.grads[i];
        for (int k = 0; k < kParamsPerPoint; ++k) {
            m[k] = kAdamBeta1 * m[k] + (1.0 - kAdamBeta1) * g[k];
            v[k] = kAdamBeta2 * v[k] + (1.0 - kAdamBeta2) * g[k] * g[k];
            const double mhat = m[k] / bc1;
            const double vhat = v[k] / bc2;
            params[k] -= cfg.lr.of(kSlotGroups[k]) * mhat / (std::sqrt(vhat) + kAdamEpsilon);
        }
        GaussianPoint& p = field.points[i];
        const std::uint8_t label = p.label;
        unpack(params, p);
        p.label = label;
        p.color = p.color.cwiseMax(0.0).cwiseMin(1.0);
        p.opacity_logit = std::clamp(p.opacity_logit, -kMaxOpacityLogit, kMaxOpacityLogit);
        p.log_scale = p.log_scale.cwiseMax(log_floor);
        p.rotation = p.rotation.norm() > 1e-12 ? p.rotation.normalized() : Quaternion::identity();
    }
}

FitResult fit(const GaussianField& initial, const SupervisionSet& sup, const FitConfig& cfg,
              const FitObserver& observer)
{
    cfg.validate();
    sup.validate();
    if (initial.empty()) throw std::invalid_argument("fit: empty field");

    FitResult result{initial, {}};
    result.history.reserve(std::size_t(cfg.iterations));
    AdamState state(initial.size());
    for (int it = 0; it < cfg.iterations; ++it) {
        LossEvaluation eval = total_loss(result.field, sup, cfg);
        const LossRecord rec{it, eval.terms};
        result.history.push_back(rec);
        if (observer) observer(rec);
        if (!std::isfinite(eval.terms.total) || eval.terms.total > 1e6 || !eval.delta.all_finite()) {
            throw DivergenceError("fit diverged at iteration " + std::to_string(it), result.history);
        }
        adam_step(result.field, eval.delta, state, cfg);
    }
    return result;
}

GaussianField initialize_field(const std::vector<Vec3>& centers, const std::vector<std::uint8_t>& labels)
{
    if (centers.size() != labels.size()) throw std::invalid_argument("initialize_field: size mismatch");
    if (centers.empty()) throw std::invalid_argument("initialize_field: no centers");

    double mean_nn = 0.0;
    for (std::size_t i = 0; i < centers.size(); ++i) {
        double best = std::numeric_limits<double>::infinity();
        for (std::size_t j = 0; j < centers.size(); ++j) {
            if (j != i) best = std::min(best, (centers[i] - centers[j]).squaredNorm());
        }
        mean_nn += std::isfinite(best) ? std::sqrt(best) : 0.0;
    }
    mean_nn /= double(centers.size());
    const double scale = std::max(2.0 * mean_nn, kScaleFloor);

    GaussianField f;
    f.points.resize(centers.size());
    for (std::size_t i = 0; i < centers.size(); ++i) {
        auto& p = f.points[i];
        p.mean = centers[i];
        p.displacement = Vec3::Zero();
        p.color = Vec3::Constant(0.5);
        p.opacity_logit = 0.0;
        p.rotation = Quaternion::identity();
        p.log_scale = Vec3::Constant(std::log(scale));
        p.label = labels[i];
    }
    return f;
}

}  // namespace gaf
