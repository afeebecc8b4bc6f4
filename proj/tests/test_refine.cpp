#include "doctest.h"
#include "test_support.hpp"

#include "gaf/harness.hpp"
#include "gaf/refine.hpp"

#include <cmath>
#include <numbers>
#include <random>
#include <vector>

using namespace gaf;
using gaf::testing::max_abs_diff;

namespace {

constexpr double kDeg = std::numbers::pi / 180.0;

NoisyAction random_action(std::mt19937_64& rng, int h, double scale = 1.0)
{
    std::normal_distribution<double> n(0.0, scale);
    NoisyAction a;
    for (int i = 0; i < h; ++i) {
        Twist t;
        for (int k = 0; k < 6; ++k) t[k] = n(rng);
        a.steps.push_back(t);
        a.gripper.push_back(i % 2);
    }
    return a;
}

struct IdentityDenoiser final : Denoiser {
    DenoiserOutput predict(const NoisyAction& x, std::span<const GuidanceImage>,
                           const DenoiseSchedule&) const override
    {
        return {Eigen::VectorXd::Zero(6 * x.horizon()), x.gripper};
    }
};

struct WrongShape final : Denoiser {
    DenoiserOutput predict(const NoisyAction& x, std::span<const GuidanceImage>,
                           const DenoiseSchedule&) const override
    {
        return {Eigen::VectorXd::Zero(3), x.gripper};
    }
};

Vec2 mask_centroid(const GuidanceImage& g, int width)
{
    Vec2 sum = Vec2::Zero();
    int n = 0;
    for (std::size_t i = 0; i < g.mask.size(); ++i) {
        if (!g.mask[i]) continue;
        sum += Vec2{double(i % width), double(i / width)};
        ++n;
    }
    REQUIRE(n > 0);
    return sum / n;
}

RefineConfig refine_config()
{
    RefineConfig cfg;
    cfg.primitive = gripper_primitive(72, 0.5);
    return cfg;
}

}  // namespace

TEST_CASE("DenoiseSchedule")
{
    const auto s = DenoiseSchedule::cosine(50);
    REQUIRE(s.size() == 50);
    CHECK(s.alpha_bar[0] == DenoiseSchedule::kFirst);
    CHECK(s.strictly_decreasing());
    CHECK_NOTHROW(s.validate());
    for (double a : s.alpha_bar) CHECK((a > 0.0 && a < 1.0));

    const auto inf = DenoiseSchedule::inference();
    REQUIRE(inf.size() == 3);
    CHECK(inf.alpha_bar[0] == s.alpha_bar[0]);
    CHECK(inf.alpha_bar[1] == s.alpha_bar[2]);
    CHECK(inf.alpha_bar[2] == s.alpha_bar[4]);

    // signal-to-noise ratio falls with the level
    for (int k = 1; k < s.size(); ++k) {
        const double prev = s.alpha_bar[k - 1] / (1 - s.alpha_bar[k - 1]);
        CHECK(s.alpha_bar[k] / (1 - s.alpha_bar[k]) < prev);
    }

    CHECK_THROWS(DenoiseSchedule::cosine(0));
    CHECK_THROWS(s.strided(30, 2));
    CHECK_THROWS(DenoiseSchedule{{1.0}}.validate());
    CHECK_FALSE(DenoiseSchedule{{0.5, 0.5}}.strictly_decreasing());
}

TEST_CASE("diffusion space conversion")
{
    ActionSequence seq;
    seq.steps.push_back({Se3{Quaternion::from_axis_angle({0, 1, 0}, 0.02), {0.0125, 0, 0}}, 1.0});
    seq.steps.push_back({Se3::identity(), 0.0});
    const ActionNormalization norm;
    const auto x = to_diffusion_space(seq, norm);
    REQUIRE(x.horizon() == 2);
    CHECK(x.steps[0][1] == doctest::Approx(1.0).epsilon(1e-12));
    CHECK(x.steps[0].tail<3>().norm() == doctest::Approx(1.0).epsilon(1e-3));
    CHECK(x.gripper[0] == 1.0);
    const auto back = from_diffusion_space(x, norm);
    CHECK(max_abs_diff(back.steps[0].motion.matrix(), seq.steps[0].motion.matrix()) < 1e-12);
    CHECK(back.steps[0].gripper == 1.0);

    std::mt19937_64 rng(1);
    NoisyAction a = random_action(rng, 3);
    NoisyAction b = a;
    b.set_flat(a.flat() * 2.0);
    CHECK(b.steps[2][5] == 2.0 * a.steps[2][5]);
    CHECK_THROWS(b.set_flat(Eigen::VectorXd::Zero(5)));
}

TEST_CASE("add_noise")
{
    std::mt19937_64 rng(2);
    const auto s = DenoiseSchedule::cosine(50);
    const NoisyAction x0 = random_action(rng, 4);

    const auto n0 = add_noise(x0, 0, s, 9);
    // sqrt(1 - ab_0) = 1e-3: the deviation is 1e-3 per unit of noise
    CHECK((n0.action.flat() - x0.flat()).norm() <= 1e-3 * n0.noise.norm() + 1e-6 * x0.flat().norm());
    CHECK(n0.action.gripper == x0.gripper);
    CHECK(n0.action.level == 0);

    const auto a = add_noise(x0, 20, s, 42), b = add_noise(x0, 20, s, 42);
    CHECK(a.noise == b.noise);
    CHECK(a.action.flat() == b.action.flat());
    CHECK(add_noise(x0, 20, s, 43).noise != a.noise);

    const Eigen::VectorXd expected =
        std::sqrt(s.alpha_bar[20]) * x0.flat() + std::sqrt(1 - s.alpha_bar[20]) * a.noise;
    CHECK((a.action.flat() - expected).cwiseAbs().maxCoeff() < 1e-15);

    CHECK_THROWS(add_noise(x0, 50, s, 1));

    SUBCASE("variance follows the schedule")
    {
        // x0 ~ N(0, 0.25) per dof, so var(x_k) = 0.25 ab + (1 - ab)
        for (int k : {5, 25, 49}) {
            const double ab = s.alpha_bar[k];
            const double want = 0.25 * ab + (1.0 - ab);
            std::normal_distribution<double> n(0.0, 0.5);
            double sum = 0.0, sq = 0.0;
            const int samples = 100000;
            NoisyAction c;
            c.steps.assign(1, Twist::Zero());
            c.gripper.assign(1, 0.0);
            for (int i = 0; i < samples; ++i) {
                c.steps[0][0] = n(rng);
                const double v = add_noise(c, k, s, std::uint64_t(i) * 7919 + k).action.steps[0][0];
                sum += v;
                sq += v * v;
            }
            const double mean = sum / samples;
            const double var = sq / samples - mean * mean;
            CHECK(std::abs(var - want) / want < 0.02);
        }
    }
}

TEST_CASE("ddim_step")
{
    std::mt19937_64 rng(3);
    const NoisyAction x0 = random_action(rng, 3);

    SUBCASE("degenerate schedule leaves x unchanged")
    {
        const DenoiseSchedule flat{{0.6, 0.6}};
        NoisyAction x = x0;
        x.level = 1;
        const auto y = ddim_step(x, Eigen::VectorXd::Zero(18), flat);
        CHECK((y.flat() - x.flat()).cwiseAbs().maxCoeff() < 1e-15);
        CHECK(y.level == 0);
    }

    SUBCASE("true noise lands on the forward process")
    {
        const auto s = DenoiseSchedule::cosine(50);
        const auto n = add_noise(x0, 30, s, 5);
        CHECK((predict_clean(n.action, n.noise, s) - x0.flat()).cwiseAbs().maxCoeff() < 1e-12);
        const auto y = ddim_step(n.action, n.noise, s);
        const Eigen::VectorXd want = std::sqrt(s.alpha_bar[29]) * x0.flat() + std::sqrt(1 - s.alpha_bar[29]) * n.noise;
        CHECK((y.flat() - want).cwiseAbs().maxCoeff() < 1e-12);
    }

    SUBCASE("oracle reverse pass telescopes")
    {
        for (int K : {1, 3, 50}) {
            const auto s = DenoiseSchedule::cosine(K);
            const auto n = add_noise(x0, K - 1, s, 11);
            const OracleDenoiser oracle(x0);
            NoisyAction x = n.action;
            while (x.level > 0) x = ddim_step(x, oracle.predict(x, {}, s).noise, s);
            x.set_flat(predict_clean(x, oracle.predict(x, {}, s).noise, s));
            CHECK((x.flat() - x0.flat()).cwiseAbs().maxCoeff() < 1e-9);
        }
    }

    NoisyAction bad = x0;
    bad.level = 0;
    CHECK_THROWS(ddim_step(bad, Eigen::VectorXd::Zero(18), DenoiseSchedule::cosine(3)));
}

TEST_CASE("render_action_guidance")
{
    const RefineConfig cfg = refine_config();
    GaussianField scene;
    GaussianPoint blob;
    blob.mean = {0.0, -0.5, 0.3};
    blob.color = {0.1, 0.7, 0.2};
    blob.opacity_logit = 2.0;
    blob.log_scale = Vec3::Constant(std::log(0.1));
    scene.points.push_back(blob);

    const Camera side = Camera::look_at({0, 0, -2}, Vec3::Zero(), {0, 1, 0}, 100, 64, 64);
    const Camera other = Camera::look_at({1.5, 0.5, -1.5}, Vec3::Zero(), {0, 1, 0}, 80, 48, 40);
    const std::vector<Camera> cams{side, other};

    SUBCASE("identity action matches the gripper footprint")
    {
        const Se3 pose{Quaternion::from_axis_angle({0, 1, 0}, 0.3), {0.05, 0.1, 0}};
        const auto g = render_action_guidance(scene, pose, Se3::identity(), cams, cfg.primitive);
        REQUIRE(g.size() == 2);
        for (std::size_t v = 0; v < cams.size(); ++v) {
            CHECK(g[v].image.width == cams[v].width);
            CHECK(g[v].image.height == cams[v].height);
            CHECK(g[v].mask == footprint_mask(pose_primitive(cfg.primitive, pose), cams[v], {}));
        }
    }

    SUBCASE("translation shifts the overlay by f t / z")
    {
        const auto g0 = render_action_guidance(scene, Se3::identity(), Se3::identity(), cams, cfg.primitive);
        const auto g1 =
            render_action_guidance(scene, Se3::identity(), Se3::from_translation({0.1, 0, 0}), cams, cfg.primitive);
        const Vec2 shift = mask_centroid(g1[0], 64) - mask_centroid(g0[0], 64);
        CHECK(std::abs(shift.x()) == doctest::Approx(5.0).epsilon(0.1));
        CHECK(std::abs(shift.y()) < 0.5);
    }

    SUBCASE("views are independent")
    {
        const auto both = render_action_guidance(scene, Se3::identity(), Se3::identity(), cams, cfg.primitive);
        const std::vector<Camera> only{other};
        const auto one = render_action_guidance(scene, Se3::identity(), Se3::identity(), only, cfg.primitive);
        CHECK(one[0].image.data == both[1].image.data);
        CHECK(one[0].mask == both[1].mask);
    }

    SUBCASE("gripper behind the camera leaves an empty mask")
    {
        const auto g = render_action_guidance(scene, Se3::from_translation({0, 0, -5}), Se3::identity(), cams,
                                              cfg.primitive);
        for (auto m : g[0].mask) CHECK(m == 0);
    }

    SUBCASE("pose_primitive")
    {
        const Se3 pose{Quaternion::from_axis_angle({1, 0, 0}, 0.5), {0.1, 0.2, 0.3}};
        const auto posed = pose_primitive(cfg.primitive, pose);
        REQUIRE(posed.size() == cfg.primitive.size());
        for (std::size_t i = 0; i < posed.size(); ++i) {
            CHECK(posed.points[i].mean.isApprox(pose.apply(cfg.primitive.points[i].mean), 1e-12));
            CHECK(posed.points[i].displacement == Vec3::Zero());
        }
    }
}

TEST_CASE("refine_action")
{
    RefineConfig cfg = refine_config();
    const Camera cam = Camera::look_at({0, 0, -2}, Vec3::Zero(), {0, 1, 0}, 60, 32, 32);
    const std::vector<Camera> cams{cam};
    GaussianField scene = pose_primitive(cfg.primitive, Se3::identity());
    const Se3 total{Quaternion::from_axis_angle({0, 1, 0}, 4 * kDeg), {0.03, -0.02, 0.01}};
    const InitAction init = interpolate_action(total, 6);

    SUBCASE("identity denoiser with a flat schedule is a no-op")
    {
        const double ab = DenoiseSchedule::kFirst;
        const auto out = refine_action(init, scene, Se3::identity(), cams, IdentityDenoiser{},
                                       DenoiseSchedule{{ab, ab, ab}}, cfg);
        REQUIRE(out.horizon() == 6);
        for (int k = 0; k < 6; ++k) {
            const auto e = pose_error(out.steps[k].motion, init.steps[k]);
            CHECK(e.rotation_deg < 1e-3 / kDeg);
            CHECK(e.translation < 1e-3);
            CHECK(out.steps[k].gripper == 0.0);
        }
    }

    SUBCASE("oracle denoiser reaches the target action")
    {
        ActionSequence target;
        const Se3 step{Quaternion::from_axis_angle({0, 0, 1}, 1 * kDeg), {0.005, 0.004, 0}};
        for (int k = 0; k < 6; ++k) target.steps.push_back({step, k >= 4 ? 1.0 : 0.0});
        const OracleDenoiser oracle(to_diffusion_space(target, cfg.normalization));

        std::vector<std::vector<GuidanceImage>> seen;
        cfg.on_guidance = [&](int, const std::vector<GuidanceImage>& g) { seen.push_back(g); };
        const auto out = refine_action(init, scene, Se3::identity(), cams, oracle, DenoiseSchedule::inference(), cfg);
        for (int k = 0; k < 6; ++k) {
            const auto e = pose_error(out.steps[k].motion, step);
            CHECK(e.rotation_deg < 0.5);
            CHECK(e.translation < 5e-3);
            CHECK(out.steps[k].gripper == target.steps[k].gripper);
        }
        // guidance is re-rendered for every level and follows the candidate
        REQUIRE(seen.size() == 3);
        CHECK(seen[0][0].image.data != seen[1][0].image.data);
    }

    SUBCASE("shape mismatch")
    {
        CHECK_THROWS_AS(refine_action(init, scene, Se3::identity(), cams, WrongShape{},
                                      DenoiseSchedule::inference(), cfg),
                        ShapeError);
    }
}

TEST_CASE("refine_loss")
{
    const Eigen::VectorXd d = Eigen::VectorXd::LinSpaced(6, -1.0, 1.0);
    const Eigen::VectorXd e = Eigen::VectorXd::LinSpaced(6, 0.5, -0.3);

    const Eigen::VectorXd g_hi = Eigen::VectorXd::Constant(2, 1.0 - kProbabilityGuard);
    const Eigen::VectorXd g_lo = Eigen::VectorXd::Constant(2, kProbabilityGuard);
    CHECK(refine_loss(d, d, e, e, g_hi, Eigen::VectorXd::Ones(2)).value < 1e-6);
    CHECK(refine_loss(d, d, e, e, g_lo, Eigen::VectorXd::Zero(2)).value < 1e-6);

    const auto half = refine_loss(d, d, e, e, Eigen::VectorXd::Constant(1, 0.5), Eigen::VectorXd::Ones(1));
    CHECK(half.value == doctest::Approx(0.693147).epsilon(1e-6));
    CHECK(std::abs(half.gripper_term - std::log(2.0)) < 1e-12);

    SUBCASE("L1 term is symmetric")
    {
        const auto a = refine_loss(d, e, e, e, g_hi, Eigen::VectorXd::Ones(2));
        const auto b = refine_loss(e, d, e, e, g_hi, Eigen::VectorXd::Ones(2));
        CHECK(a.direction_term == b.direction_term);
    }

    SUBCASE("BCE is strictly convex in the prediction")
    {
        const Eigen::VectorXd t = Eigen::VectorXd::Constant(1, 0.3);
        auto f = [&](double p) { return refine_loss(d, d, e, e, Eigen::VectorXd::Constant(1, p), t).value; };
        for (double p = 0.05; p < 0.95; p += 0.05) CHECK(f(p - 0.01) + f(p + 0.01) - 2 * f(p) > 0.0);
    }

    SUBCASE("gradients match central differences")
    {
        std::mt19937_64 rng(4);
        std::normal_distribution<double> n(0.0, 1.0);
        std::uniform_real_distribution<double> u(0.05, 0.95);
        for (int trial = 0; trial < 20; ++trial) {
            Eigen::VectorXd D(12), Dg(12), E(12), Eg(12), G(2), Gg(2);
            for (int i = 0; i < 12; ++i) {
                D[i] = n(rng), Dg[i] = n(rng), E[i] = n(rng), Eg[i] = n(rng);
            }
            G << u(rng), u(rng);
            Gg << trial % 2, (trial / 2) % 2;
            const auto L = refine_loss(D, Dg, E, Eg, G, Gg);
            const double h = 1e-6;
            auto check = [&](Eigen::VectorXd& x, const Eigen::VectorXd& grad) {
                for (Eigen::Index i = 0; i < x.size(); ++i) {
                    const double keep = x[i];
                    x[i] = keep + h;
                    const double up = refine_loss(D, Dg, E, Eg, G, Gg).value;
                    x[i] = keep - h;
                    const double dn = refine_loss(D, Dg, E, Eg, G, Gg).value;
                    x[i] = keep;
                    const double fd = (up - dn) / (2 * h);
                    CHECK(std::abs(fd - grad[i]) <= 1e-4 * std::max(std::abs(fd), 1e-6));
                }
            };
            check(D, L.d_direction);
            check(E, L.d_noise);
            check(G, L.d_gripper);
        }
    }

    SUBCASE("out of range predictions are clamped")
    {
        const auto L = refine_loss(d, d, e, e, Eigen::VectorXd::Constant(1, 1.5), Eigen::VectorXd::Zero(1));
        CHECK(L.gripper_term == doctest::Approx(-std::log(kProbabilityGuard)).epsilon(1e-9));
        CHECK(std::isfinite(L.value));
    }

    CHECK_THROWS_AS(refine_loss(d, e.head(3), e, e, g_hi, g_hi), ShapeError);
}
