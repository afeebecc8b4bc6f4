#include "doctest.h"
#include "test_support.hpp"

#include "gaf/action.hpp"

#include <algorithm>
#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace gaf;
using gaf::testing::max_abs_diff;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

std::vector<Vec3> random_cloud(std::mt19937_64& rng, int n, double spread)
{
    std::uniform_real_distribution<double> u(-spread, spread);
    std::vector<Vec3> pts(n);
    for (auto& p : pts) p = {u(rng), u(rng), u(rng)};
    return pts;
}

std::vector<Vec3> transformed(const Se3& T, const std::vector<Vec3>& pts)
{
    std::vector<Vec3> out;
    for (const auto& p : pts) out.push_back(T.apply(p));
    return out;
}

Se3 random_motion(std::mt19937_64& rng, double max_deg, double max_t)
{
    std::uniform_real_distribution<double> u(-1.0, 1.0);
    std::uniform_real_distribution<double> ang(0.0, max_deg * kDeg);
    std::normal_distribution<double> n(0.0, 1.0);
    Vec3 axis{n(rng), n(rng), n(rng)};
    Vec3 dir{n(rng), n(rng), n(rng)};
    const double mag = std::uniform_real_distribution<double>(0.0, max_t)(rng);
    return {Quaternion::from_axis_angle(axis, ang(rng)), dir.normalized() * mag};
}

GaussianField gripper_cloud(const std::vector<Vec3>& pts, const Se3& motion)
{
    GaussianField f;
    for (const auto& p : pts) {
        GaussianPoint g;
        g.mean = p;
        g.displacement = motion.apply(p) - p;
        g.label = static_cast<std::uint8_t>(Label::Gripper);
        f.points.push_back(g);
    }
    return f;
}

}  // namespace

TEST_CASE("kabsch_align")
{
    std::mt19937_64 rng(1);
    const auto src = random_cloud(rng, 20, 0.5);

    const Se3 id = kabsch_align(src, src);
    CHECK(max_abs_diff(id.matrix(), Mat4::Identity()) < 1e-12);

    const Se3 shift = kabsch_align(src, transformed(Se3::from_translation({0.1, 0, 0}), src));
    CHECK(shift.translation.isApprox(Vec3{0.1, 0, 0}, 1e-12));
    CHECK(shift.angle() < 1e-12);

    const Se3 T{Quaternion::from_axis_angle({0, 0, 1}, 30 * kDeg), {0.05, 0, 0.02}};
    const Se3 got = kabsch_align(src, transformed(T, src));
    CHECK(max_abs_diff(got.matrix(), T.matrix()) < 1e-9);

    SUBCASE("reflections are corrected")
    {
        std::vector<Vec3> mirrored;
        for (const auto& p : src) mirrored.push_back({-p.x(), p.y(), p.z()});
        const Se3 r = kabsch_align(src, mirrored);
        CHECK(r.rotation_matrix().determinant() == doctest::Approx(1.0).epsilon(1e-12));
    }

    SUBCASE("errors")
    {
        const std::vector<Vec3> line{{0, 0, 0}, {1, 0, 0}, {2, 0, 0}, {3, 0, 0}};
        CHECK_THROWS_AS(kabsch_align(line, line), RegistrationError);
        const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
        CHECK_THROWS(kabsch_align(two, two));
        CHECK_THROWS(kabsch_align(src, std::vector<Vec3>(src.begin(), src.end() - 1)));
    }
}

TEST_CASE("icp")
{
    std::mt19937_64 rng(2);
    const auto src = random_cloud(rng, 120, 0.4);

    SUBCASE("identity on a shuffled copy")
    {
        auto dst = src;
        std::shuffle(dst.begin(), dst.end(), rng);
        const auto r = icp(src, dst);
        CHECK(max_abs_diff(r.transform.matrix(), Mat4::Identity()) < 1e-9);
        CHECK(r.rms < 1e-9);
    }

    SUBCASE("noiseless shuffled recovery")
    {
        for (int trial = 0; trial < 20; ++trial) {
            const Se3 T = random_motion(rng, 20.0, 0.1);
            auto dst = transformed(T, src);
            std::shuffle(dst.begin(), dst.end(), rng);
            const auto r = icp(src, dst);
            const auto e = pose_error(r.transform, T);
            CHECK(e.rotation_deg < 0.5);
            CHECK(e.translation < 1e-3);
        }
    }

    SUBCASE("paired correspondence is exact in one iteration")
    {
        const Se3 T = random_motion(rng, 20.0, 0.1);
        const auto dst = transformed(T, src);
        IcpConfig cfg;
        cfg.correspondence = Correspondence::PairedByIndex;
        const auto r = icp(src, dst, cfg);
        CHECK(max_abs_diff(r.transform.matrix(), T.matrix()) < 1e-9);
    }

    SUBCASE("equivariance under a global rotation")
    {
        const Se3 T = random_motion(rng, 15.0, 0.08);
        const Se3 R = Se3::from_rotation(Quaternion::from_axis_angle({0.3, 1.0, -0.2}, 0.7));
        const auto dst = transformed(T, src);
        const auto a = icp(src, dst);
        const auto b = icp(transformed(R, src), transformed(R, dst));
        const Se3 conj = se3_compose(R, se3_compose(a.transform, R.inverse()));
        CHECK(max_abs_diff(b.transform.matrix(), conj.matrix()) < 1e-6);
    }

    SUBCASE("errors")
    {
        const std::vector<Vec3> two{{0, 0, 0}, {1, 0, 0}};
        CHECK_THROWS(icp(two, src));
        IcpConfig bad;
        bad.tolerance = 0.0;
        CHECK_THROWS(icp(src, src, bad));
    }
}

TEST_CASE("interpolate_action")
{
    std::mt19937_64 rng(3);
    SUBCASE("pure translation splits linearly")
    {
        const auto a = interpolate_action(Se3::from_translation({0.08, 0, 0}), 8);
        REQUIRE(a.horizon() == 8);
        for (const auto& s : a.steps) {
            CHECK(s.translation.isApprox(Vec3{0.01, 0, 0}, 1e-12));
            CHECK(s.angle() < 1e-12);
        }
    }

    SUBCASE("steps compose to the total")
    {
        for (int i = 0; i < 200; ++i) {
            const Se3 T = gaf::testing::random_se3(rng, 2.5, 1.0);
            const int h = 1 + i % 12;
            const auto a = interpolate_action(T, h);
            CHECK(max_abs_diff(compose_steps(a.steps).matrix(), T.matrix()) < 1e-8);
            CHECK(max_abs_diff(a.total.matrix(), T.matrix()) == 0.0);
        }
    }

    SUBCASE("screw motion has equal steps")
    {
        const Se3 T{Quaternion::from_axis_angle({0, 1, 0}, 0.4), {0.1, 0.0, 0.05}};
        const auto a = interpolate_action(T, 4);
        for (const auto& s : a.steps) CHECK(max_abs_diff(s.matrix(), a.steps[0].matrix()) < 1e-12);
    }

    CHECK_THROWS(interpolate_action(Se3::identity(), 0));
}

TEST_CASE("body frame steps")
{
    std::mt19937_64 rng(4);
    const Se3 T = random_motion(rng, 20.0, 0.1);
    const Se3 pose = gaf::testing::random_se3(rng, 2.0, 0.5);
    const auto world = interpolate_action(T, 5);
    const auto body = to_body_frame(world, pose);
    // world-left composition on the pose equals body-right composition
    const Se3 a = se3_compose(compose_steps(world.steps), pose);
    const Se3 b = se3_compose(pose, compose_body_steps(body.steps));
    CHECK(max_abs_diff(a.matrix(), b.matrix()) < 1e-12);
}

TEST_CASE("compute_init_action")
{
    std::mt19937_64 rng(5);
    const auto pts = random_cloud(rng, 40, 0.2);

    SUBCASE("zero displacement gives identity steps")
    {
        const auto a = compute_init_action(gripper_cloud(pts, Se3::identity()), 1, 8);
        REQUIRE(a.horizon() == 8);
        for (const auto& s : a.steps) CHECK(max_abs_diff(s.matrix(), Mat4::Identity()) < 1e-9);
    }

    SUBCASE("pure translation")
    {
        const auto a = compute_init_action(gripper_cloud(pts, Se3::from_translation({0.08, 0, 0})), 1, 8);
        for (const auto& s : a.steps) {
            CHECK(s.translation.isApprox(Vec3{0.01, 0, 0}, 1e-9));
            CHECK(s.angle() < 1e-9);
        }
    }

    SUBCASE("rigid motion with distractors")
    {
        const Se3 T = random_motion(rng, 10.0, 0.05);
        GaussianField f = gripper_cloud(pts, T);
        GaussianPoint other;
        other.mean = {0.5, 0.5, 0.5};
        other.displacement = {0.3, 0, 0};
        other.label = 2;
        f.points.push_back(other);
        GaussianPoint faint = f.points[0];
        faint.opacity_logit = -8.0;
        faint.displacement = {0.5, 0.5, 0.5};
        f.points.push_back(faint);
        const auto a = compute_init_action(f, 1, 6, {}, 0.3);
        CHECK(max_abs_diff(a.total.matrix(), T.matrix()) < 1e-6);
        CHECK(max_abs_diff(compose_steps(a.steps).matrix(), a.total.matrix()) < 1e-8);
    }

    SUBCASE("missing label")
    {
        CHECK_THROWS_AS(compute_init_action(gripper_cloud(pts, Se3::identity()), 2, 8), EmptySubsetError);
    }
}
