#include "gaf/action.hpp"
#include "gaf/field.hpp"
#include "gaf/fitter.hpp"
#include "gaf/harness.hpp"
#include "gaf/image.hpp"
#include "gaf/metrics.hpp"
#include "gaf/parallel.hpp"
#include "gaf/refine.hpp"
#include "gaf/serialization.hpp"

#include <CLI11.hpp>

#include <cstdio>
#include <filesystem>
#include <fstream>
#include <iostream>
#include <optional>
#include <random>
#include <string>

namespace fs = std::filesystem;
using namespace gaf;

namespace {

constexpr int kExitOk = 0;
constexpr int kExitUsage = 1;
constexpr int kExitNumerical = 2;

struct Options {
    std::string spec;
    std::string out;
    std::string scene;
    std::string config;
    std::string field;
    std::optional<std::uint64_t> seed;
    int threads = 1;
    std::optional<int> iterations;
    int horizon = 8;
    std::string mode = "gt";
    std::string denoiser = "oracle";
    bool dump_guidance = false;
    int nx = 3;
    int nz = 3;
    int train_episodes = 100;
    double min_opacity = 0.3;
    std::string correspondence = "paired";
};

SceneSpec load_spec(const Options& o)
{
    SceneSpec spec = o.spec.empty() ? default_scene_spec() : scene_spec_from_json(read_text_file(o.spec));
    if (o.seed) spec.seed = *o.seed;
    return spec;
}

fs::path ensure_dir(const std::string& dir)
{
    if (dir.empty()) throw ConfigError("--out is required");
    fs::create_directories(dir);
    return dir;
}

void write_views(const fs::path& dir, const std::string& prefix, const std::vector<View>& views)
{
    for (std::size_t i = 0; i < views.size(); ++i) {
        write_ppm(dir / (prefix + "_" + std::to_string(i) + ".ppm"), views[i].image);
    }
}

std::vector<View> read_views(const fs::path& dir, const std::string& prefix, const std::vector<Camera>& cams)
{
    std::vector<View> views;
    for (std::size_t i = 0; i < cams.size(); ++i) {
        views.push_back({cams[i], read_ppm(dir / (prefix + "_" + std::to_string(i) + ".ppm"))});
    }
    return views;
}

int cmd_gen_scene(const Options& o)
{
    const SceneSpec spec = load_spec(o);
    const fs::path dir = ensure_dir(o.out);
    const GeneratedScene scene = generate_scene(spec);
    write_text_file(dir / "scene.json", scene_spec_to_json(spec));
    save_field(dir / "field.gaf", scene.field);
    write_views(dir, "current", scene.supervision.current);
    write_views(dir, "future", scene.supervision.future);
    write_views(dir, "heldout_current", scene.held_out_current);
    write_views(dir, "heldout_future", scene.held_out_future);
    std::printf("wrote %zu Gaussians and %zu supervision views to %s\n", scene.field.size(),
                scene.supervision.current.size() * 2, dir.string().c_str());
    return kExitOk;
}

void print_row(const char* kind, std::size_t index, const GaussianField& field, const View& cur, const View& fut,
               const RenderConfig& cfg, std::ostream& csv)
{
    const Image rc = render(field, cur.camera, cfg).image;
    const Image rf = render(advance(field, 1.0), fut.camera, cfg).image;
    const double pc = compute_psnr(rc, cur.image), sc = compute_ssim(rc, cur.image);
    const double pf = compute_psnr(rf, fut.image), sf = compute_ssim(rf, fut.image);
    std::printf("%-9s %5zu | %8.2f %8.4f | %8.2f %8.4f\n", kind, index, pc, sc, pf, sf);
    csv << kind << ',' << index << ',' << pc << ',' << sc << ',' << pf << ',' << sf << '\n';
}

int cmd_fit(const Options& o)
{
    if (o.scene.empty()) throw ConfigError("--scene is required");
    const fs::path scene_dir = o.scene;
    const SceneSpec spec = scene_spec_from_json(read_text_file(scene_dir / "scene.json"));
    FitConfig cfg = o.config.empty() ? FitConfig{} : fit_config_from_json(read_text_file(o.config));
    if (o.iterations) cfg.iterations = *o.iterations;
    if (o.seed) cfg.seed = *o.seed;
    cfg.validate();
    const fs::path dir = ensure_dir(o.out);

    SupervisionSet sup;
    sup.current = read_views(scene_dir, "current", spec.cameras);
    sup.future = read_views(scene_dir, "future", spec.cameras);
    sup.validate();

    // centers from the scene's field, jittered; appearance and motion start blank
    const GaussianField truth = load_field(scene_dir / "field.gaf");
    std::mt19937_64 rng(cfg.seed);
    std::normal_distribution<double> jitter(0.0, 0.01);
    std::vector<Vec3> centers;
    std::vector<std::uint8_t> labels;
    for (const auto& p : truth.points) {
        centers.push_back(p.mean + Vec3{jitter(rng), jitter(rng), jitter(rng)});
        labels.push_back(p.label);
    }
    const GaussianField init = initialize_field(centers, labels);

    std::ofstream loss(dir / "loss.csv");
    loss << kLossCsvHeader << '\n';
    FitResult result;
    try {
        result = fit(init, sup, cfg, [&](const LossRecord& r) {
            append_loss_csv_row(loss, r);
            loss.flush();
        });
    } catch (const DivergenceError& e) {
        std::fprintf(stderr, "fit diverged: %s (loss history kept in %s)\n", e.what(),
                     (dir / "loss.csv").string().c_str());
        return kExitNumerical;
    }
    save_field(dir / "field.gaf", result.field);

    std::ofstream csv(dir / "metrics.csv");
    csv << "split,view,psnr_current,ssim_current,psnr_future,ssim_future\n";
    std::printf("%-9s %5s | %8s %8s | %8s %8s\n", "split", "view", "PSNR t", "SSIM t", "PSNR t+1", "SSIM t+1");
    for (std::size_t i = 0; i < sup.current.size(); ++i) {
        print_row("train", i, result.field, sup.current[i], sup.future[i], cfg.render, csv);
    }
    if (!spec.held_out.empty()) {
        const auto hc = read_views(scene_dir, "heldout_current", spec.held_out);
        const auto hf = read_views(scene_dir, "heldout_future", spec.held_out);
        for (std::size_t i = 0; i < hc.size(); ++i) print_row("held-out", i, result.field, hc[i], hf[i], cfg.render, csv);
    }
    return kExitOk;
}

int cmd_extract_action(const Options& o)
{
    if (o.field.empty()) throw ConfigError("--field is required");
    if (o.horizon < 1) throw ConfigError("--horizon must be at least 1");
    IcpConfig icp_cfg;
    icp_cfg.correspondence = o.correspondence == "nn" ? Correspondence::NearestNeighbor : Correspondence::PairedByIndex;
    const GaussianField field = load_field(o.field);
    const InitAction action = compute_init_action(field, static_cast<std::uint8_t>(Label::Gripper), o.horizon, icp_cfg,
                                                  o.min_opacity);
    const std::string json = init_action_to_json(action);
    if (o.out.empty()) {
        std::cout << json;
    } else {
        write_text_file(o.out, json);
    }
    return kExitOk;
}

ControllerConfig controller(const Options& o, std::optional<RidgeDenoiser>& ridge, const SceneSpec& spec)
{
    ControllerConfig cfg;
    cfg.horizon = o.horizon;
    cfg.mode = o.mode == "fitted" ? PerceptionMode::Fitted : PerceptionMode::GroundTruth;
    cfg.denoiser = o.denoiser == "ridge" ? DenoiserKind::Ridge : DenoiserKind::Oracle;
    if (o.iterations) cfg.warm_fit.iterations = *o.iterations;
    if (cfg.denoiser == DenoiserKind::Ridge) {
        std::printf("training ridge denoiser on %d expert rollouts\n", o.train_episodes);
        ridge = train_ridge_denoiser(spec, cfg, o.train_episodes, spec.seed ^ 0x5eedull);
        cfg.ridge = &*ridge;
    }
    return cfg;
}

int cmd_loop(const Options& o)
{
    const SceneSpec spec = load_spec(o);
    const fs::path dir = ensure_dir(o.out);
    std::optional<RidgeDenoiser> ridge;
    ControllerConfig cfg = controller(o, ridge, spec);
    if (o.dump_guidance) {
        const fs::path gdir = dir / "guidance";
        fs::create_directories(gdir);
        cfg.on_guidance = [gdir](int cycle, int level, const std::vector<GuidanceImage>& views) {
            for (std::size_t v = 0; v < views.size(); ++v) {
                write_ppm(gdir / ("cycle" + std::to_string(cycle) + "_level" + std::to_string(level) + "_view" +
                                  std::to_string(v) + ".ppm"),
                          views[v].image);
            }
        };
    }
    const EpisodeReport report = run_episode(spec, cfg);
    std::ofstream csv(dir / "episode.csv");
    write_episode_csv(csv, report);
    std::printf("success %d cycles %d steps %d rotation %.4f deg translation %.5f%s\n", report.success ? 1 : 0,
                report.cycles, report.steps, report.final_error.rotation_deg, report.final_error.translation,
                report.out_of_bounds ? " (left the workspace)" : "");
    return kExitOk;
}

int cmd_sweep(const Options& o)
{
    const SceneSpec spec = load_spec(o);
    const fs::path dir = ensure_dir(o.out);
    std::optional<RidgeDenoiser> ridge;
    const ControllerConfig cfg = controller(o, ridge, spec);
    SweepGrid grid;
    grid.nx = o.nx;
    grid.nz = o.nz;
    const auto cells = sweep(spec, grid, cfg);
    std::ofstream csv(dir / "sweep.csv");
    write_sweep_csv(csv, cells);
    int ok = 0;
    for (const auto& c : cells) ok += c.report.success ? 1 : 0;
    std::printf("%d/%zu cells succeeded\n", ok, cells.size());
    return kExitOk;
}

}  // namespace

int main(int argc, char** argv)
{
    CLI::App app{"Gaussian action field: fit, extract, refine and run the closed loop"};
    app.require_subcommand(1);
    Options o;

    auto common = [&](CLI::App* sub) {
        sub->add_option("--threads", o.threads, "worker threads")->check(CLI::PositiveNumber);
        sub->add_option("--seed", o.seed, "seed override");
    };
    auto scene_opts = [&](CLI::App* sub) {
        sub->add_option("--spec", o.spec, "scene spec JSON (default scene when omitted)");
        sub->add_option("--out", o.out, "output directory")->required();
    };
    auto loop_opts = [&](CLI::App* sub) {
        sub->add_option("--mode", o.mode, "perception")->check(CLI::IsMember({"gt", "fitted"}));
        sub->add_option("--denoiser", o.denoiser, "action denoiser")->check(CLI::IsMember({"oracle", "ridge"}));
        sub->add_option("--horizon", o.horizon, "steps per cycle")->check(CLI::PositiveNumber);
        sub->add_option("--iterations", o.iterations, "warm-start fit iterations per cycle");
        sub->add_option("--train-episodes", o.train_episodes, "expert rollouts for the ridge denoiser")
            ->check(CLI::PositiveNumber);
    };

    auto* gen = app.add_subcommand("gen-scene", "generate a synthetic scene and its supervision");
    scene_opts(gen);
    common(gen);

    auto* fitc = app.add_subcommand("fit", "fit a field to a generated scene");
    fitc->add_option("--scene", o.scene, "directory written by gen-scene")->required();
    fitc->add_option("--config", o.config, "fit config JSON");
    fitc->add_option("--out", o.out, "output directory")->required();
    fitc->add_option("--iterations", o.iterations, "override the configured iterations")->check(CLI::NonNegativeNumber);
    common(fitc);

    auto* ext = app.add_subcommand("extract-action", "register the gripper and write the init action");
    ext->add_option("--field", o.field, "GAF1 field file")->required();
    ext->add_option("--horizon", o.horizon, "number of steps")->check(CLI::PositiveNumber);
    ext->add_option("--out", o.out, "action JSON (stdout when omitted)");
    ext->add_option("--min-opacity", o.min_opacity, "ignore fainter gripper Gaussians");
    ext->add_option("--correspondence", o.correspondence, "paired or nn")->check(CLI::IsMember({"paired", "nn"}));
    common(ext);

    auto* loop = app.add_subcommand("loop", "run one closed-loop episode");
    scene_opts(loop);
    loop_opts(loop);
    loop->add_flag("--dump-guidance", o.dump_guidance, "write guidance images as PPM");
    common(loop);

    auto* sw = app.add_subcommand("sweep", "run episodes over a grid of goals");
    scene_opts(sw);
    loop_opts(sw);
    sw->add_option("--nx", o.nx, "grid cells along x")->check(CLI::PositiveNumber);
    sw->add_option("--nz", o.nz, "grid cells along z")->check(CLI::PositiveNumber);
    common(sw);

    try {
        app.parse(argc, argv);
    } catch (const CLI::ParseError& e) {
        const int code = app.exit(e);
        return code == 0 ? kExitOk : kExitUsage;
    }

    try {
        set_thread_count(o.threads);
        if (gen->parsed()) return cmd_gen_scene(o);
        if (fitc->parsed()) return cmd_fit(o);
        if (ext->parsed()) return cmd_extract_action(o);
        if (loop->parsed()) return cmd_loop(o);
        if (sw->parsed()) return cmd_sweep(o);
    } catch (const NumericalError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const RegistrationError& e) {
        std::fprintf(stderr, "registration failed: %s\n", e.what());
        return kExitNumerical;
    } catch (const GeometryError& e) {
        std::fprintf(stderr, "numerical failure: %s\n", e.what());
        return kExitNumerical;
    } catch (const std::exception& e) {
        std::fprintf(stderr, "error: %s\n", e.what());
        return kExitUsage;
    }
    return kExitUsage;
}
