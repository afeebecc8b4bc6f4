#include "gaf/renderer.hpp"

#include "gaf/parallel.hpp"

#include <algorithm>
#include <cmath>
#include <numeric>
#include <stdexcept>

namespace gaf {

void RenderConfig::validate() const
{
    if (!(alpha_cutoff > 0.0 && alpha_cutoff < alpha_ceiling && alpha_ceiling <= 0.999)) {
        throw std::invalid_argument("render config: need 0 < alpha_cutoff < alpha_ceiling <= 0.999");
    }
    if (!(support_radius > 0.0)) throw std::invalid_argument("render config: support radius must be positive");
}

namespace {

constexpr int kRowsPerChunk = 4;

struct Splat {
    std::uint32_t index = 0;
    double depth = 0.0;
    Vec2 mean;
    // inverse 2D covariance [[a, b], [b, c]]
    double a = 0.0, b = 0.0, c = 0.0;
    double opacity = 0.0;
    Vec3 color;
    int x0 = 0, x1 = -1, y0 = 0, y1 = -1;  // inclusive pixel bounds
};

bool splat_less(const Splat& l, const Splat& r)
{
    if (l.depth != r.depth) return l.depth < r.depth;
    return l.index < r.index;
}

Splat make_splat(const GaussianPoint& p, std::uint32_t index, const ProjectedGaussian& proj,
                 const Camera& cam, double radius)
{
    Splat s;
    s.index = index;
    s.depth = proj.depth;
    s.mean = proj.mean;
    const Mat2& cov = proj.cov;
    const double det = cov(0, 0) * cov(1, 1) - cov(0, 1) * cov(1, 0);
    s.a = cov(1, 1) / det;
    s.b = -cov(0, 1) / det;
    s.c = cov(0, 0) / det;
    s.opacity = p.opacity();
    s.color = p.color;
    // Axis-aligned bounds of the support ellipse, padded by one pixel.
    const double ex = radius * std::sqrt(cov(0, 0));
    const double ey = radius * std::sqrt(cov(1, 1));
    const double fx0 = std::floor(proj.mean.x() - ex) - 1.0;
    const double fx1 = std::ceil(proj.mean.x() + ex) + 1.0;
    const double fy0 = std::floor(proj.mean.y() - ey) - 1.0;
    const double fy1 = std::ceil(proj.mean.y() + ey) + 1.0;
    s.x0 = int(std::clamp(fx0, 0.0, double(cam.width)));
    s.x1 = int(std::clamp(fx1, -1.0, double(cam.width - 1)));
    s.y0 = int(std::clamp(fy0, 0.0, double(cam.height)));
    s.y1 = int(std::clamp(fy1, -1.0, double(cam.height - 1)));
    return s;
}

// Projects every visible Gaussian; culled ones are dropped.
std::vector<Splat> prepare_splats(const GaussianField& field, const Camera& cam, double radius)
{
    std::vector<Splat> out;
    out.reserve(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const auto& p = field.points[i];
        const auto proj = project_gaussian(p.mean, covariance_from_rs(p.rotation, p.scale()), cam);
        if (!proj) continue;
        out.push_back(make_splat(p, std::uint32_t(i), *proj, cam, radius));
    }
    return out;
}

struct Sample {
    double alpha = 0.0;
    bool clamped = false;
    double dx = 0.0, dy = 0.0;
};

// Returns false when the Gaussian does not contribute at pixel (px, py).
bool evaluate(const Splat& s, double px, double py, const RenderConfig& cfg, Sample& out)
{
    const double dx = px - s.mean.x();
    const double dy = py - s.mean.y();
    const double q = s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy;
    if (q > cfg.support_radius * cfg.support_radius) return false;
    const double raw = s.opacity * std::exp(-0.5 * q);
    if (raw < cfg.alpha_cutoff) return false;
    out.clamped = raw > cfg.alpha_ceiling;
    out.alpha = out.clamped ? cfg.alpha_ceiling : raw;
    out.dx = dx;
    out.dy = dy;
    return true;
}

RenderOutput blank_output(const Camera& cam)
{
    RenderOutput out;
    out.image = Image(cam.width, cam.height);
    out.transmittance.assign(std::size_t(cam.width) * cam.height, 1.0);
    return out;
}

void write_pixel(RenderOutput& out, int x, int y, const Vec3& color, double T, const Vec3& bg)
{
    for (int ch = 0; ch < 3; ++ch) out.image.at(x, y, ch) = color[ch] + T * bg[ch];
    out.transmittance[std::size_t(y) * out.image.width + x] = T;
}

// Splats whose bounds overlap rows [y0, y1], in blend order.
std::vector<std::uint32_t> chunk_candidates(const std::vector<Splat>& splats, int y0, int y1)
{
    std::vector<std::uint32_t> ids;
    for (std::uint32_t k = 0; k < splats.size(); ++k) {
        const auto& s = splats[k];
        if (s.y1 >= y0 && s.y0 <= y1 && s.x1 >= s.x0) ids.push_back(k);
    }
    return ids;
}

int chunk_count(const Camera& cam) { return (cam.height + kRowsPerChunk - 1) / kRowsPerChunk; }

// Per-splat accumulators for image-space gradients.
struct SplatGrad {
    double mean[2] = {0, 0};
    double cov[3] = {0, 0, 0};  // d/dSigma2d entries (00, 01 = 10, 11)
    double color[3] = {0, 0, 0};
    double logit = 0.0;
};

}  // namespace

RenderOutput render(const GaussianField& field, const Camera& cam, const RenderConfig& cfg)
{
    cam.validate();
    cfg.validate();
    RenderOutput out = blank_output(cam);
    std::vector<Splat> splats = prepare_splats(field, cam, cfg.support_radius);
    std::sort(splats.begin(), splats.end(), splat_less);

    parallel_for(std::size_t(chunk_count(cam)), [&](std::size_t chunk) {
        const int y0 = int(chunk) * kRowsPerChunk;
        const int y1 = std::min(cam.height - 1, y0 + kRowsPerChunk - 1);
        const auto ids = chunk_candidates(splats, y0, y1);
        Sample smp;
        for (int y = y0; y <= y1; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                Vec3 color = Vec3::Zero();
                double T = 1.0;
                for (std::uint32_t k : ids) {
                    const Splat& s = splats[k];
                    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
                    if (!evaluate(s, x, y, cfg, smp)) continue;
                    color += (smp.alpha * T) * s.color;
                    T *= 1.0 - smp.alpha;
                }
                write_pixel(out, x, y, color, T, cfg.background);
            }
        }
    });
    return out;
}

RenderOutput render_reference(const GaussianField& field, const Camera& cam, const RenderConfig& cfg)
{
    cam.validate();
    cfg.validate();
    RenderOutput out = blank_output(cam);
    const std::vector<Splat> splats = prepare_splats(field, cam, cfg.support_radius);

    struct Hit {
        const Splat* splat;
        Sample sample;
    };
    std::vector<Hit> hits;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            hits.clear();
            for (const auto& s : splats) {
                Sample smp;
                if (evaluate(s, x, y, cfg, smp)) hits.push_back({&s, smp});
            }
            std::sort(hits.begin(), hits.end(),
                      [](const Hit& l, const Hit& r) { return splat_less(*l.splat, *r.splat); });
            Vec3 color = Vec3::Zero();
            double T = 1.0;
            for (const auto& h : hits) {
                color += (h.sample.alpha * T) * h.splat->color;
                T *= 1.0 - h.sample.alpha;
            }
            write_pixel(out, x, y, color, T, cfg.background);
        }
    }
    return out;
}

namespace {

// Chains image-space gradients of one Gaussian back to its parameters.
void backprop_point(const GaussianPoint& p, const Camera& cam, const SplatGrad& g, PointParams& out)
{
    const RotationJacobian rj = rotation_with_jacobian(p.rotation);
    const Mat3& R = rj.rotation;
    const Vec3 raw_scale = p.log_scale.array().exp();
    const Vec3 s = raw_scale.cwiseMax(kScaleFloor);
    const Mat3 M = R * s.asDiagonal();
    const Mat3 Sigma = M * M.transpose();

    const Mat3 W = cam.world_to_camera.rotation_matrix();
    const Vec3 pc = W * p.mean + cam.world_to_camera.translation;
    const double x = pc.x(), y = pc.y(), z = pc.z();
    const double z2 = z * z, z3 = z2 * z;
    Eigen::Matrix<double, 2, 3> J;
    J << cam.fx / z, 0.0, -cam.fx * x / z2,
         0.0, cam.fy / z, -cam.fy * y / z2;
    const Eigen::Matrix<double, 2, 3> T = J * W;

    Mat2 G2;
    G2 << g.cov[0], g.cov[1], g.cov[1], g.cov[2];

    const Mat3 dSigma = T.transpose() * G2 * T;
    const Eigen::Matrix<double, 2, 3> dT = 2.0 * G2 * T * Sigma;
    const Eigen::Matrix<double, 2, 3> dJ = dT * W.transpose();

    Vec3 dpc = J.transpose() * Vec2(g.mean[0], g.mean[1]);
    dpc.x() += dJ(0, 2) * (-cam.fx / z2);
    dpc.y() += dJ(1, 2) * (-cam.fy / z2);
    dpc.z() += dJ(0, 0) * (-cam.fx / z2) + dJ(0, 2) * (2.0 * cam.fx * x / z3) +
               dJ(1, 1) * (-cam.fy / z2) + dJ(1, 2) * (2.0 * cam.fy * y / z3);
    const Vec3 dmean = W.transpose() * dpc;

    const Mat3 dM = 2.0 * dSigma * M;
    const Mat3 dR = dM * s.asDiagonal();
    Vec3 dlog_scale;
    for (int k = 0; k < 3; ++k) {
        const double ds = R.col(k).dot(dM.col(k));
        dlog_scale[k] = raw_scale[k] >= kScaleFloor ? ds * raw_scale[k] : 0.0;
    }
    Vec4 dq;
    for (int j = 0; j < 4; ++j) dq[j] = (dR.array() * rj.d_rotation[j].array()).sum();

    out[0] += dmean.x();
    out[1] += dmean.y();
    out[2] += dmean.z();
    out[6] += g.color[0];
    out[7] += g.color[1];
    out[8] += g.color[2];
    out[9] += g.logit;
    for (int j = 0; j < 4; ++j) out[10 + j] += dq[j];
    for (int k = 0; k < 3; ++k) out[14 + k] += dlog_scale[k];
}

}  // namespace

FieldDelta render_backward(const GaussianField& field, const Camera& cam, const RenderConfig& cfg,
                           const Image& image_gradient)
{
    cam.validate();
    cfg.validate();
    if (image_gradient.width != cam.width || image_gradient.height != cam.height) {
        throw std::invalid_argument("render_backward: gradient image does not match camera");
    }
    std::vector<Splat> splats = prepare_splats(field, cam, cfg.support_radius);
    std::sort(splats.begin(), splats.end(), splat_less);

    const int chunks = chunk_count(cam);
    std::vector<std::vector<SplatGrad>> partial(std::size_t(chunks), std::vector<SplatGrad>(splats.size()));

    parallel_for(std::size_t(chunks), [&](std::size_t chunk) {
        auto& acc = partial[chunk];
        const int y0 = int(chunk) * kRowsPerChunk;
        const int y1 = std::min(cam.height - 1, y0 + kRowsPerChunk - 1);
        const auto ids = chunk_candidates(splats, y0, y1);

        struct Contribution {
            std::uint32_t k;
            Sample smp;
            double T;
        };
        std::vector<Contribution> list;
        Sample smp;
        for (int y = y0; y <= y1; ++y) {
            for (int x = 0; x < cam.width; ++x) {
                const Vec3 dC{image_gradient.at(x, y, 0), image_gradient.at(x, y, 1), image_gradient.at(x, y, 2)};
                if (dC.isZero(0.0)) continue;
                list.clear();
                double T = 1.0;
                for (std::uint32_t k : ids) {
                    const Splat& s = splats[k];
                    if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
                    if (!evaluate(s, x, y, cfg, smp)) continue;
                    list.push_back({k, smp, T});
                    T *= 1.0 - smp.alpha;
                }
                // Contribution of everything behind the current entry, dotted with dC.
                double behind = T * cfg.background.dot(dC);
                for (auto it = list.rbegin(); it != list.rend(); ++it) {
                    const Splat& s = splats[it->k];
                    SplatGrad& g = acc[it->k];
                    const double a = it->smp.alpha;
                    const double cg = s.color.dot(dC);
                    const double w = a * it->T;
                    g.color[0] += w * dC[0];
                    g.color[1] += w * dC[1];
                    g.color[2] += w * dC[2];
                    if (!it->smp.clamped) {
                        const double dalpha = it->T * cg - behind / (1.0 - a);
                        g.logit += dalpha * a * (1.0 - s.opacity);
                        // alpha = o exp(-q/2), q = d^T A d, d = p - mean
                        const double ax = s.a * it->smp.dx + s.b * it->smp.dy;
                        const double ay = s.b * it->smp.dx + s.c * it->smp.dy;
                        const double da = dalpha * a;
                        g.mean[0] += da * ax;
                        g.mean[1] += da * ay;
                        g.cov[0] += 0.5 * da * ax * ax;
                        g.cov[1] += 0.5 * da * ax * ay;
                        g.cov[2] += 0.5 * da * ay * ay;
                    }
                    behind += w * cg;
                }
            }
        }
    });

    FieldDelta delta(field.size());
    for (std::size_t k = 0; k < splats.size(); ++k) {
        SplatGrad total;
        for (int chunk = 0; chunk < chunks; ++chunk) {
            const SplatGrad& g = partial[std::size_t(chunk)][k];
            for (int i = 0; i < 2; ++i) total.mean[i] += g.mean[i];
            for (int i = 0; i < 3; ++i) total.cov[i] += g.cov[i];
            for (int i = 0; i < 3; ++i) total.color[i] += g.color[i];
            total.logit += g.logit;
        }
        const std::uint32_t idx = splats[k].index;
        backprop_point(field.points[idx], cam, total, delta.grads[idx]);
    }
    return delta;
}

FieldDelta chain_through_advance(const FieldDelta& advanced)
{
    FieldDelta out = advanced;
    for (auto& g : out.grads) {
        g[3] = g[0];
        g[4] = g[1];
        g[5] = g[2];
    }
    return out;
}

Visibility capture_visibility(const GaussianField& field, const Camera& cam, const RenderConfig& cfg)
{
    cam.validate();
    cfg.validate();
    std::vector<Splat> splats = prepare_splats(field, cam, cfg.support_radius);
    std::sort(splats.begin(), splats.end(), splat_less);
    Visibility vis;
    vis.width = cam.width;
    vis.height = cam.height;
    vis.offsets.reserve(std::size_t(cam.width) * cam.height + 1);
    vis.offsets.push_back(0);
    Sample smp;
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            for (const auto& s : splats) {
                if (x < s.x0 || x > s.x1 || y < s.y0 || y > s.y1) continue;
                if (!evaluate(s, x, y, cfg, smp)) continue;
                vis.entries.push_back({s.index, smp.clamped});
            }
            vis.offsets.push_back(std::uint32_t(vis.entries.size()));
        }
    }
    return vis;
}

RenderOutput render_frozen(const GaussianField& field, const Camera& cam, const RenderConfig& cfg,
                           const Visibility& gates)
{
    cam.validate();
    cfg.validate();
    if (gates.width != cam.width || gates.height != cam.height) {
        throw std::invalid_argument("render_frozen: visibility does not match camera");
    }
    std::vector<Splat> by_index(field.size());
    for (std::size_t i = 0; i < field.size(); ++i) {
        const auto& p = field.points[i];
        const auto proj = project_gaussian(p.mean, covariance_from_rs(p.rotation, p.scale()), cam);
        if (proj) by_index[i] = make_splat(p, std::uint32_t(i), *proj, cam, cfg.support_radius);
    }
    RenderOutput out = blank_output(cam);
    for (int y = 0; y < cam.height; ++y) {
        for (int x = 0; x < cam.width; ++x) {
            const std::size_t pix = std::size_t(y) * cam.width + x;
            Vec3 color = Vec3::Zero();
            double T = 1.0;
            for (std::uint32_t e = gates.offsets[pix]; e < gates.offsets[pix + 1]; ++e) {
                const auto& entry = gates.entries[e];
                const Splat& s = by_index.at(entry.index);
                double alpha = cfg.alpha_ceiling;
                if (!entry.clamped) {
                    const double dx = x - s.mean.x();
                    const double dy = y - s.mean.y();
                    alpha = s.opacity * std::exp(-0.5 * (s.a * dx * dx + 2.0 * s.b * dx * dy + s.c * dy * dy));
                }
                color += (alpha * T) * s.color;
                T *= 1.0 - alpha;
            }
            write_pixel(out, x, y, color, T, cfg.background);
        }
    }
    return out;
}

}  // namespace gaf
