#include "gaf/serialization.hpp"

#include <json.hpp>

#include <charconv>
#include <fstream>
#include <set>
#include <sstream>

namespace gaf {

using nlohmann::json;

namespace {

std::string num(double v)
{
    char buf[64];
    const auto r = std::to_chars(buf, buf + sizeof buf, v);
    return std::string(buf, r.ptr);
}

json parse(std::string_view text)
{
    try {
        return json::parse(text);
    } catch (const json::parse_error& e) {
        throw ConfigError(std::string("malformed JSON: ") + e.what());
    }
}

void require_object(const json& j, const std::string& where)
{
    if (!j.is_object()) throw ConfigError(where + ": expected an object");
}

void reject_unknown(const json& j, const std::set<std::string>& known, const std::string& where)
{
    require_object(j, where);
    for (const auto& [key, _] : j.items()) {
        if (!known.contains(key)) throw ConfigError(where + ": unknown key '" + key + "'");
    }
}

const json& field_of(const json& j, const std::string& key, const std::string& where)
{
    if (!j.contains(key)) throw ConfigError(where + ": missing '" + key + "'");
    return j.at(key);
}

double as_number(const json& j, const std::string& where)
{
    if (!j.is_number()) throw ConfigError(where + ": expected a number");
    return j.get<double>();
}

std::int64_t as_integer(const json& j, const std::string& where)
{
    if (!j.is_number_integer()) throw ConfigError(where + ": expected an integer");
    return j.get<std::int64_t>();
}

std::uint64_t as_unsigned(const json& j, const std::string& where)
{
    if (j.is_number_unsigned()) return j.get<std::uint64_t>();
    if (j.is_number_integer() && j.get<std::int64_t>() >= 0) return std::uint64_t(j.get<std::int64_t>());
    throw ConfigError(where + ": expected a non-negative integer");
}

template <int N>
Eigen::Matrix<double, N, 1> as_vector(const json& j, const std::string& where)
{
    if (!j.is_array() || j.size() != std::size_t(N)) {
        throw ConfigError(where + ": expected an array of " + std::to_string(N) + " numbers");
    }
    Eigen::Matrix<double, N, 1> v;
    for (int i = 0; i < N; ++i) v[i] = as_number(j[std::size_t(i)], where);
    return v;
}

template <typename Derived>
json vec_json(const Eigen::MatrixBase<Derived>& v)
{
    json a = json::array();
    for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v[i]);
    return a;
}

json quat_json(const Quaternion& q) { return json::array({q.w, q.x, q.y, q.z}); }

Quaternion as_quaternion(const json& j, const std::string& where)
{
    const Vec4 c = as_vector<4>(j, where);
    return Quaternion{c[0], c[1], c[2], c[3]};
}

json se3_json(const Se3& t) { return {{"q", quat_json(t.rotation)}, {"t", vec_json(t.translation)}}; }

Se3 as_se3(const json& j, const std::string& where)
{
    reject_unknown(j, {"q", "t"}, where);
    Se3 t;
    t.rotation = as_quaternion(field_of(j, "q", where), where + ".q");
    t.translation = as_vector<3>(field_of(j, "t", where), where + ".t");
    return t;
}

json camera_json(const Camera& c)
{
    return {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy}, {"width", c.width}, {"height", c.height},
            {"q", quat_json(c.world_to_camera.rotation)}, {"t", vec_json(c.world_to_camera.translation)}};
}

Camera as_camera(const json& j, const std::string& where)
{
    reject_unknown(j, {"fx", "fy", "cx", "cy", "width", "height", "q", "t"}, where);
    Camera c;
    c.fx = as_number(field_of(j, "fx", where), where + ".fx");
    c.fy = as_number(field_of(j, "fy", where), where + ".fy");
    c.cx = as_number(field_of(j, "cx", where), where + ".cx");
    c.cy = as_number(field_of(j, "cy", where), where + ".cy");
    c.width = int(as_integer(field_of(j, "width", where), where + ".width"));
    c.height = int(as_integer(field_of(j, "height", where), where + ".height"));
    c.world_to_camera.rotation = as_quaternion(field_of(j, "q", where), where + ".q");
    c.world_to_camera.translation = as_vector<3>(field_of(j, "t", where), where + ".t");
    try {
        c.validate();
    } catch (const std::exception& e) {
        throw ConfigError(where + ": " + e.what());
    }
    return c;
}

std::vector<Camera> as_cameras(const json& j, const std::string& where)
{
    if (!j.is_array()) throw ConfigError(where + ": expected an array");
    std::vector<Camera> out;
    for (std::size_t i = 0; i < j.size(); ++i) out.push_back(as_camera(j[i], where + "[" + std::to_string(i) + "]"));
    return out;
}

json cameras_json(const std::vector<Camera>& cams)
{
    json a = json::array();
    for (const auto& c : cams) a.push_back(camera_json(c));
    return a;
}

json steps_json(const std::vector<Se3>& steps, const std::vector<double>* gripper)
{
    json a = json::array();
    for (std::size_t i = 0; i < steps.size(); ++i) {
        json s = se3_json(steps[i]);
        if (gripper) s["g"] = (*gripper)[i];
        a.push_back(s);
    }
    return a;
}

struct ParsedSteps {
    std::vector<Se3> motions;
    std::vector<double> gripper;
};

ParsedSteps parse_steps(std::string_view text, bool with_gripper)
{
    const json j = parse(text);
    reject_unknown(j, {"horizon", "steps"}, "action");
    const std::int64_t horizon = as_integer(field_of(j, "horizon", "action"), "action.horizon");
    const json& steps = field_of(j, "steps", "action");
    if (!steps.is_array()) throw ConfigError("action.steps: expected an array");
    if (horizon < 1 || std::size_t(horizon) != steps.size()) {
        throw ConfigError("action: horizon does not match the number of steps");
    }
    ParsedSteps out;
    for (std::size_t i = 0; i < steps.size(); ++i) {
        const std::string where = "action.steps[" + std::to_string(i) + "]";
        const json& s = steps[i];
        if (with_gripper) {
            reject_unknown(s, {"q", "t", "g"}, where);
            const double g = as_number(field_of(s, "g", where), where + ".g");
            if (g < 0.0 || g > 1.0) throw ConfigError(where + ".g: must lie in [0, 1]");
            out.gripper.push_back(g);
        } else {
            reject_unknown(s, {"q", "t"}, where);
        }
        Se3 t;
        t.rotation = as_quaternion(field_of(s, "q", where), where + ".q");
        t.translation = as_vector<3>(field_of(s, "t", where), where + ".t");
        if (std::abs(t.rotation.norm() - 1.0) > 1e-6) throw ConfigError(where + ".q: not a unit quaternion");
        out.motions.push_back(t);
    }
    return out;
}

}  // namespace

std::string read_text_file(const std::filesystem::path& path)
{
    std::ifstream in(path, std::ios::binary);
    if (!in) throw ConfigError("cannot open " + path.string());
    std::ostringstream ss;
    ss << in.rdbuf();
    return ss.str();
}

void write_text_file(const std::filesystem::path& path, std::string_view text)
{
    std::ofstream out(path, std::ios::binary);
    if (!out) throw std::runtime_error("cannot write " + path.string());
    out << text;
    if (!out) throw std::runtime_error("write failed: " + path.string());
}

// FitConfig ---------------------------------------------------------------------

std::string fit_config_to_json(const FitConfig& cfg)
{
    const json j{{"iterations", cfg.iterations},
                 {"seed", cfg.seed},
                 {"ssim_weight", cfg.ssim_weight},
                 {"background", vec_json(cfg.render.background)},
                 {"lr",
                  {{"mean", cfg.lr.mean},
                   {"displacement", cfg.lr.displacement},
                   {"color", cfg.lr.color},
                   {"opacity", cfg.lr.opacity},
                   {"rotation", cfg.lr.rotation},
                   {"scale", cfg.lr.scale}}}};
    return j.dump(2) + "\n";
}

FitConfig fit_config_from_json(std::string_view text)
{
    const json j = parse(text);
    reject_unknown(j, {"iterations", "seed", "ssim_weight", "background", "lr"}, "fit config");
    FitConfig cfg;
    if (j.contains("iterations")) cfg.iterations = int(as_integer(j["iterations"], "iterations"));
    if (j.contains("seed")) cfg.seed = as_unsigned(j["seed"], "seed");
    if (j.contains("ssim_weight")) cfg.ssim_weight = as_number(j["ssim_weight"], "ssim_weight");
    if (j.contains("background")) cfg.render.background = as_vector<3>(j["background"], "background");
    if (j.contains("lr")) {
        const json& lr = j["lr"];
        reject_unknown(lr, {"mean", "displacement", "color", "opacity", "rotation", "scale"}, "lr");
        auto opt = [&](const char* key, double& dst) {
            if (lr.contains(key)) dst = as_number(lr[key], std::string("lr.") + key);
        };
        opt("mean", cfg.lr.mean);
        opt("displacement", cfg.lr.displacement);
        opt("color", cfg.lr.color);
        opt("opacity", cfg.lr.opacity);
        opt("rotation", cfg.lr.rotation);
        opt("scale", cfg.lr.scale);
    }
    try {
        cfg.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("fit config: ") + e.what());
    }
    return cfg;
}

// SceneSpec ---------------------------------------------------------------------

std::string scene_spec_to_json(const SceneSpec& spec)
{
    json objects = json::array();
    for (const auto& o : spec.objects) {
        objects.push_back({{"count", o.count},
                           {"color", vec_json(o.color)},
                           {"pose", se3_json(o.pose)},
                           {"radii", vec_json(o.radii)},
                           {"label", o.label},
                           {"twist", vec_json(o.twist)}});
    }
    const json j{{"seed", spec.seed},
                 {"bbox_min", vec_json(spec.bbox_min)},
                 {"bbox_max", vec_json(spec.bbox_max)},
                 {"gripper",
                  {{"count", spec.gripper.count},
                   {"extent", spec.gripper.extent},
                   {"pose", se3_json(spec.gripper.pose)},
                   {"twist", vec_json(spec.gripper.twist)}}},
                 {"objects", objects},
                 {"cameras", cameras_json(spec.cameras)},
                 {"held_out", cameras_json(spec.held_out)},
                 {"goal", se3_json(spec.goal)}};
    return j.dump(2) + "\n";
}

SceneSpec scene_spec_from_json(std::string_view text)
{
    const json j = parse(text);
    reject_unknown(j, {"seed", "bbox_min", "bbox_max", "gripper", "objects", "cameras", "held_out", "goal"},
                   "scene spec");
    SceneSpec spec = default_scene_spec();
    if (j.contains("seed")) spec.seed = as_unsigned(j["seed"], "seed");
    if (j.contains("bbox_min")) spec.bbox_min = as_vector<3>(j["bbox_min"], "bbox_min");
    if (j.contains("bbox_max")) spec.bbox_max = as_vector<3>(j["bbox_max"], "bbox_max");
    if (j.contains("gripper")) {
        const json& g = j["gripper"];
        reject_unknown(g, {"count", "extent", "pose", "twist"}, "gripper");
        if (g.contains("count")) spec.gripper.count = int(as_integer(g["count"], "gripper.count"));
        if (g.contains("extent")) spec.gripper.extent = as_number(g["extent"], "gripper.extent");
        if (g.contains("pose")) spec.gripper.pose = as_se3(g["pose"], "gripper.pose");
        if (g.contains("twist")) spec.gripper.twist = as_vector<6>(g["twist"], "gripper.twist");
    }
    if (j.contains("objects")) {
        const json& arr = j["objects"];
        if (!arr.is_array()) throw ConfigError("objects: expected an array");
        spec.objects.clear();
        for (std::size_t i = 0; i < arr.size(); ++i) {
            const std::string where = "objects[" + std::to_string(i) + "]";
            const json& o = arr[i];
            reject_unknown(o, {"count", "color", "pose", "radii", "label", "twist"}, where);
            ObjectSpec os;
            if (o.contains("count")) os.count = int(as_integer(o["count"], where + ".count"));
            if (o.contains("color")) os.color = as_vector<3>(o["color"], where + ".color");
            if (o.contains("pose")) os.pose = as_se3(o["pose"], where + ".pose");
            if (o.contains("radii")) os.radii = as_vector<3>(o["radii"], where + ".radii");
            if (o.contains("label")) {
                const auto l = as_integer(o["label"], where + ".label");
                if (l < 0 || l > 255) throw ConfigError(where + ".label: out of range");
                os.label = std::uint8_t(l);
            }
            if (o.contains("twist")) os.twist = as_vector<6>(o["twist"], where + ".twist");
            spec.objects.push_back(os);
        }
    }
    if (j.contains("cameras")) spec.cameras = as_cameras(j["cameras"], "cameras");
    if (j.contains("held_out")) spec.held_out = as_cameras(j["held_out"], "held_out");
    if (j.contains("goal")) spec.goal = as_se3(j["goal"], "goal");
    try {
        spec.validate();
    } catch (const std::exception& e) {
        throw ConfigError(std::string("scene spec: ") + e.what());
    }
    return spec;
}

// Actions ---------------------------------------------------------------------

std::string init_action_to_json(const InitAction& action)
{
    const json j{{"horizon", action.horizon()}, {"steps", steps_json(action.steps, nullptr)}};
    return j.dump(2) + "\n";
}

InitAction init_action_from_json(std::string_view text)
{
    ParsedSteps p = parse_steps(text, false);
    InitAction a;
    a.steps = std::move(p.motions);
    a.total = compose_steps(a.steps);
    return a;
}

std::string action_sequence_to_json(const ActionSequence& seq)
{
    std::vector<Se3> motions;
    std::vector<double> gripper;
    for (const auto& s : seq.steps) {
        motions.push_back(s.motion);
        gripper.push_back(s.gripper);
    }
    const json j{{"horizon", seq.horizon()}, {"steps", steps_json(motions, &gripper)}};
    return j.dump(2) + "\n";
}

ActionSequence action_sequence_from_json(std::string_view text)
{
    const ParsedSteps p = parse_steps(text, true);
    ActionSequence seq;
    for (std::size_t i = 0; i < p.motions.size(); ++i) seq.steps.push_back({p.motions[i], p.gripper[i]});
    return seq;
}

// CSV -------------------------------------------------------------------------

void append_loss_csv_row(std::ostream& out, const LossRecord& r)
{
    out << r.iteration << ',' << num(r.terms.total) << ',' << num(r.terms.current) << ',' << num(r.terms.future)
        << '\n';
}

void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history)
{
    out << kLossCsvHeader << '\n';
    for (const auto& r : history) append_loss_csv_row(out, r);
}

void write_episode_csv(std::ostream& out, const EpisodeReport& report)
{
    out << "cycle,icp_rms,fit_psnr,init_rot_deg,init_trans,rot_deg,trans\n";
    for (const auto& m : report.per_cycle) {
        out << m.cycle << ',' << num(m.icp_rms) << ',' << num(m.fit_psnr) << ',' << num(m.init_error.rotation_deg)
            << ',' << num(m.init_error.translation) << ',' << num(m.pose_error.rotation_deg) << ','
            << num(m.pose_error.translation) << '\n';
    }
}

void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells)
{
    out << "ix,iz,goal_x,goal_y,goal_z,success,cycles,steps,rot_deg,trans\n";
    for (const auto& c : cells) {
        out << c.ix << ',' << c.iz << ',' << num(c.goal.x()) << ',' << num(c.goal.y()) << ',' << num(c.goal.z())
            << ',' << (c.report.success ? 1 : 0) << ',' << c.report.cycles << ',' << c.report.steps << ','
            << num(c.report.final_error.rotation_deg) << ',' << num(c.report.final_error.translation) << '\n';
    }
}

}  // namespace gaf
