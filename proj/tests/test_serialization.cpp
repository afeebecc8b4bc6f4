#include "doctest.h"
#include "test_support.hpp"

#include "gaf/serialization.hpp"

#include <random>
#include <sstream>
#include <string>

using namespace gaf;
using gaf::testing::max_abs_diff;

namespace {

bool same_camera(const Camera& a, const Camera& b)
{
    return a.fx == b.fx && a.fy == b.fy && a.cx == b.cx && a.cy == b.cy && a.width == b.width &&
           a.height == b.height && max_abs_diff(a.world_to_camera.matrix(), b.world_to_camera.matrix()) < 1e-15;
}

std::size_t count_lines(const std::string& s)
{
    std::size_t n = 0;
    for (char c : s) n += c == '\n';
    return n;
}

}  // namespace

TEST_CASE("fit config JSON")
{
    FitConfig cfg;
    cfg.iterations = 123;
    cfg.seed = 99;
    cfg.ssim_weight = 0.35;
    cfg.render.background = {0.1, 0.2, 0.3};
    cfg.lr.displacement = 2.5e-3;
    const FitConfig back = fit_config_from_json(fit_config_to_json(cfg));
    CHECK(back.iterations == 123);
    CHECK(back.seed == 99);
    CHECK(back.ssim_weight == 0.35);
    CHECK(back.render.background == cfg.render.background);
    CHECK(back.lr.displacement == 2.5e-3);
    CHECK(back.lr.color == cfg.lr.color);

    CHECK(fit_config_from_json("{}").iterations == FitConfig{}.iterations);
    CHECK(fit_config_from_json(R"({"lr": {"mean": 0.01}})").lr.mean == 0.01);

    CHECK_THROWS_AS(fit_config_from_json("{"), ConfigError);
    CHECK_THROWS_AS(fit_config_from_json(R"({"iterations": 10, "speed": 1})"), ConfigError);
    CHECK_THROWS_AS(fit_config_from_json(R"({"lr": {"colour": 0.1}})"), ConfigError);
    CHECK_THROWS_AS(fit_config_from_json(R"({"iterations": "many"})"), ConfigError);
    CHECK_THROWS_AS(fit_config_from_json(R"({"iterations": -1})"), ConfigError);
    CHECK_THROWS_AS(fit_config_from_json(R"({"ssim_weight": 1.5})"), ConfigError);
    CHECK_THROWS_AS(fit_config_from_json("[1, 2]"), ConfigError);
}

TEST_CASE("scene spec JSON")
{
    const SceneSpec spec = dense_scene_spec();
    const SceneSpec back = scene_spec_from_json(scene_spec_to_json(spec));
    CHECK(back.seed == spec.seed);
    CHECK(back.bbox_min == spec.bbox_min);
    CHECK(back.gripper.count == spec.gripper.count);
    CHECK(back.gripper.twist == spec.gripper.twist);
    CHECK(back.gripper.pose == spec.gripper.pose);
    REQUIRE(back.objects.size() == spec.objects.size());
    CHECK(back.objects[0].radii == spec.objects[0].radii);
    CHECK(back.objects[0].label == spec.objects[0].label);
    CHECK(back.objects[0].twist == spec.objects[0].twist);
    REQUIRE(back.cameras.size() == spec.cameras.size());
    for (std::size_t i = 0; i < spec.cameras.size(); ++i) CHECK(same_camera(back.cameras[i], spec.cameras[i]));
    REQUIRE(back.held_out.size() == spec.held_out.size());
    CHECK(back.goal == spec.goal);

    // the generated scene is unchanged by the round trip
    CHECK(generate_scene(back).field == generate_scene(spec).field);

    // partial documents keep defaults
    CHECK(scene_spec_from_json(R"({"seed": 5})").seed == 5);
    CHECK(scene_spec_from_json(R"({"seed": 5})").cameras.size() == default_scene_spec().cameras.size());

    CHECK_THROWS_AS(scene_spec_from_json(R"({"sed": 5})"), ConfigError);
    CHECK_THROWS_AS(scene_spec_from_json(R"({"gripper": {"count": 0}})"), ConfigError);
    CHECK_THROWS_AS(scene_spec_from_json(R"({"cameras": []})"), ConfigError);
    CHECK_THROWS_AS(scene_spec_from_json(R"({"objects": [{"label": 300}]})"), ConfigError);
}

TEST_CASE("action JSON")
{
    std::mt19937_64 rng(6);
    const InitAction a = interpolate_action(gaf::testing::random_se3(rng, 0.5, 0.2), 7);
    const InitAction b = init_action_from_json(init_action_to_json(a));
    REQUIRE(b.horizon() == 7);
    for (int k = 0; k < 7; ++k) CHECK(max_abs_diff(a.steps[k].matrix(), b.steps[k].matrix()) < 1e-12);
    CHECK(max_abs_diff(compose_steps(b.steps).matrix(), b.total.matrix()) < 1e-12);

    ActionSequence seq;
    for (const auto& s : a.steps) seq.steps.push_back({s, double(seq.steps.size() % 2)});
    const ActionSequence seq2 = action_sequence_from_json(action_sequence_to_json(seq));
    REQUIRE(seq2.horizon() == seq.horizon());
    for (int k = 0; k < seq.horizon(); ++k) {
        CHECK(max_abs_diff(seq.steps[k].motion.matrix(), seq2.steps[k].motion.matrix()) < 1e-12);
        CHECK(seq.steps[k].gripper == seq2.steps[k].gripper);
    }

    CHECK_THROWS_AS(init_action_from_json(R"({"horizon": 2, "steps": [{"q": [1,0,0,0], "t": [0,0,0]}]})"),
                    ConfigError);
    CHECK_THROWS_AS(init_action_from_json(R"({"horizon": 1, "steps": [{"q": [2,0,0,0], "t": [0,0,0]}]})"),
                    ConfigError);
    CHECK_THROWS_AS(init_action_from_json(R"({"steps": []})"), ConfigError);
    CHECK_THROWS_AS(
        action_sequence_from_json(R"({"horizon": 1, "steps": [{"q": [1,0,0,0], "t": [0,0,0], "g": 2}]})"),
        ConfigError);
    CHECK_THROWS_AS(
        init_action_from_json(R"({"horizon": 1, "steps": [{"q": [1,0,0,0], "t": [0,0,0], "x": 1}]})"),
        ConfigError);
}

TEST_CASE("CSV writers")
{
    std::ostringstream loss;
    std::vector<LossRecord> hist(3);
    hist[1].iteration = 1;
    hist[1].terms.total = 0.1;
    write_loss_csv(loss, hist);
    const std::string text = loss.str();
    CHECK(text.rfind(std::string(kLossCsvHeader) + "\n", 0) == 0);
    CHECK(count_lines(text) == 4);
    CHECK(text.find("\n1,0.1,") != std::string::npos);

    EpisodeReport report;
    report.per_cycle.resize(2);
    report.per_cycle[1].cycle = 1;
    std::ostringstream ep;
    write_episode_csv(ep, report);
    CHECK(ep.str().rfind("cycle,icp_rms,fit_psnr,init_rot_deg,init_trans,rot_deg,trans\n", 0) == 0);
    CHECK(count_lines(ep.str()) == 3);

    std::vector<SweepCell> cells(2);
    cells[1].ix = 1;
    cells[1].goal = {0.25, 0, -0.3};
    cells[1].report.success = true;
    std::ostringstream sw;
    write_sweep_csv(sw, cells);
    CHECK(sw.str().rfind("ix,iz,goal_x,goal_y,goal_z,success,cycles,steps,rot_deg,trans\n", 0) == 0);
    CHECK(sw.str().find("\n1,0,0.25,0,-0.3,1,") != std::string::npos);

    // doubles are written so that they parse back exactly
    LossRecord r;
    r.terms.total = 0.1 + 0.2;
    std::ostringstream one;
    append_loss_csv_row(one, r);
    const std::string row = one.str();
    const auto c1 = row.find(',');
    CHECK(std::stod(row.substr(c1 + 1)) == 0.1 + 0.2);
}
