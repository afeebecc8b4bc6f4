#pragma once

#include "gaf/action.hpp"
#include "gaf/fitter.hpp"
#include "gaf/harness.hpp"

#include <filesystem>
#include <ostream>
#include <stdexcept>
#include <string>
#include <string_view>
#include <vector>

namespace gaf {

/// Malformed document, wrong type, missing required key or unknown key.
class ConfigError : public std::invalid_argument {
public:
    using std::invalid_argument::invalid_argument;
};

std::string read_text_file(const std::filesystem::path& path);
void write_text_file(const std::filesystem::path& path, std::string_view text);

// JSON documents. Every parser rejects keys it does not know; missing keys
// keep their defaults unless noted.

/// {"iterations", "seed", "ssim_weight", "background": [r, g, b],
///  "lr": {"mean", "displacement", "color", "opacity", "rotation", "scale"}}
std::string fit_config_to_json(const FitConfig& cfg);
FitConfig fit_config_from_json(std::string_view text);

/// {"seed", "bbox_min", "bbox_max", "gripper": {...}, "objects": [...],
///  "cameras": [...], "held_out": [...], "goal": {"q", "t"}}. Cameras are
/// {"fx", "fy", "cx", "cy", "width", "height", "q", "t"} (world to camera).
std::string scene_spec_to_json(const SceneSpec& spec);
SceneSpec scene_spec_from_json(std::string_view text);

/// {"horizon": h, "steps": [{"q": [w, x, y, z], "t": [x, y, z]}, ...]};
/// horizon and steps are required and must agree.
std::string init_action_to_json(const InitAction& action);
InitAction init_action_from_json(std::string_view text);

/// As for InitAction, plus "g" per step.
std::string action_sequence_to_json(const ActionSequence& seq);
ActionSequence action_sequence_from_json(std::string_view text);

// CSV -------------------------------------------------------------------------

/// iteration,total,current,future
void write_loss_csv(std::ostream& out, const std::vector<LossRecord>& history);
void append_loss_csv_row(std::ostream& out, const LossRecord& record);
inline constexpr std::string_view kLossCsvHeader = "iteration,total,current,future";

/// One row per cycle: cycle,icp_rms,fit_psnr,init_rot_deg,init_trans,rot_deg,trans
void write_episode_csv(std::ostream& out, const EpisodeReport& report);

/// One row per cell: ix,iz,goal_x,goal_y,goal_z,success,cycles,steps,rot_deg,trans
void write_sweep_csv(std::ostream& out, const std::vector<SweepCell>& cells);

}  // namespace gaf
