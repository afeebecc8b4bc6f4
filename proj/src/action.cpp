#include "gaf/action.hpp"

#include "gaf/kdtree.hpp"

#include <Eigen/SVD>

#include <cmath>
#include <set>

namespace gaf {

Se3 kabsch_align(std::span<const Vec3> src, std::span<const Vec3> dst)
{
    if (src.size() != dst.size()) throw RegistrationError("kabsch: point counts differ");
    if (src.size() < 3) throw RegistrationError("kabsch: need at least three pairs");

    const double n = double(src.size());
    Vec3 cs = Vec3::Zero(), cd = Vec3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        cs += src[i];
        cd += dst[i];
    }
    cs /= n;
    cd /= n;

    Mat3 H = Mat3::Zero(), C = Mat3::Zero();
    for (std::size_t i = 0; i < src.size(); ++i) {
        const Vec3 a = src[i] - cs;
        H += a * (dst[i] - cd).transpose();
        C += a * a.transpose();
    }
    C /= n;
    const Vec3 sv = Eigen::JacobiSVD<Mat3>(C).singularValues();
    if (!(sv[1] > 1e-9)) throw RegistrationError("kabsch: degenerate source configuration");

    const Eigen::JacobiSVD<Mat3> svd(H, Eigen::ComputeFullU | Eigen::ComputeFullV);
    const Mat3 U = svd.matrixU(), V = svd.matrixV();
    Mat3 D = Mat3::Identity();
    D(2, 2) = (V * U.transpose()).determinant() < 0.0 ? -1.0 : 1.0;
    const Mat3 R = V * D * U.transpose();
    const Quaternion q = Quaternion::from_matrix(R);
    // translation from the unit quaternion's own matrix keeps the pair consistent
    return {q, cd - q.to_matrix() * cs};
}

namespace {

double rms_of(std::span<const Vec3> src, std::span<const Vec3> matched, const Se3& T)
{
    double s = 0.0;
    for (std::size_t i = 0; i < src.size(); ++i) s += (T.apply(src[i]) - matched[i]).squaredNorm();
    return std::sqrt(s / double(src.size()));
}

}  // namespace

IcpResult icp(std::span<const Vec3> src, std::span<const Vec3> dst, const IcpConfig& cfg)
{
    if (src.size() < 3 || dst.size() < 3) throw RegistrationError("icp: need at least three points per cloud");
    if (!(cfg.tolerance > 0.0) || cfg.max_iterations < 1) throw std::invalid_argument("icp: bad config");

    if (cfg.correspondence == Correspondence::PairedByIndex) {
        if (src.size() != dst.size()) throw RegistrationError("icp: paired clouds differ in size");
        IcpResult r;
        r.transform = kabsch_align(src, dst);
        r.rms = rms_of(src, dst, r.transform);
        r.iterations = 1;
        return r;
    }

    const KdTree tree(std::vector<Vec3>(dst.begin(), dst.end()));
    std::vector<Vec3> matched(src.size());
    std::vector<std::uint32_t> ids(src.size());
    auto match = [&](const Se3& T) {
        for (std::size_t i = 0; i < src.size(); ++i) {
            ids[i] = tree.nearest(T.apply(src[i])).index;
            matched[i] = dst[ids[i]];
        }
        if (std::set<std::uint32_t>(ids.begin(), ids.end()).size() < 3) {
            throw RegistrationError("icp: degenerate correspondences");
        }
    };

    IcpResult r;
    double prev = std::numeric_limits<double>::infinity();
    for (int it = 0; it < cfg.max_iterations; ++it) {
        match(r.transform);
        r.transform = kabsch_align(src, matched);
        r.iterations = it + 1;
        const double rms = rms_of(src, matched, r.transform);
        if (std::abs(prev - rms) < cfg.tolerance) break;
        prev = rms;
    }
    match(r.transform);
    r.rms = rms_of(src, matched, r.transform);
    return r;
}

InitAction interpolate_action(const Se3& total, int horizon)
{
    if (horizon < 1) throw std::invalid_argument("interpolate_action: horizon must be >= 1");
    InitAction a;
    a.total = total;
    a.steps.reserve(std::size_t(horizon));
    Se3 prev = Se3::identity();
    for (int k = 0; k < horizon; ++k) {
        const Se3 next = se3_interpolate(total, double(k + 1) / horizon);
        a.steps.push_back(se3_compose(next, prev.inverse()));
        prev = next;
    }
    return a;
}

InitAction compute_init_action(const GaussianField& field, std::uint8_t label, int horizon, const IcpConfig& cfg,
                               double min_opacity)
{
    const LabeledSubset subset = extract_subset(field, label, min_opacity);
    const IcpResult reg = icp(subset.positions, subset.future_positions, cfg);
    return interpolate_action(reg.transform, horizon);
}

InitAction to_body_frame(const InitAction& world, const Se3& pose)
{
    const Se3 inv = pose.inverse();
    InitAction out;
    out.total = se3_compose(inv, se3_compose(world.total, pose));
    for (const auto& s : world.steps) out.steps.push_back(se3_compose(inv, se3_compose(s, pose)));
    return out;
}

Se3 compose_steps(std::span<const Se3> steps)
{
    Se3 acc = Se3::identity();
    for (const auto& s : steps) acc = se3_compose(s, acc);
    return acc;
}

Se3 compose_body_steps(std::span<const Se3> steps)
{
    Se3 acc = Se3::identity();
    for (const auto& s : steps) acc = se3_compose(acc, s);
    return acc;
}

}  // namespace gaf
