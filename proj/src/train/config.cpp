#include "svga/config.hpp"

#include <cmath>
#include <fstream>
#include <functional>
#include <map>
#include <sstream>

namespace svga {

int TrainConfig::grid_h() const {
  return static_cast<int>(std::ceil((grid_y_max - grid_y_min) / grid_resolution - 1e-9));
}

int TrainConfig::grid_w() const {
  return static_cast<int>(std::ceil((grid_x_max - grid_x_min) / grid_resolution - 1e-9));
}

std::vector<AnchorSpec> TrainConfig::anchor_specs() const {
  std::vector<AnchorSpec> specs;
  auto push = [&](ObjectClass cls, double l, double w, double h) {
    for (double theta : {0.0, M_PI / 2.0}) {
      AnchorSpec s;
      s.cls = cls;
      s.l = l;
      s.w = w;
      s.h = h;
      s.z = anchor_z;
      s.theta = theta;
      specs.push_back(s);
    }
  };
  if (class_set == "car") {
    push(ObjectClass::Car, 3.9, 1.6, 1.56);
  } else {
    push(ObjectClass::Pedestrian, 0.8, 0.6, 1.73);
    push(ObjectClass::Cyclist, 1.76, 0.6, 1.73);
  }
  return specs;
}

SynthConfig TrainConfig::synth_config() const {
  SynthConfig s;
  s.n_boxes = synthetic_boxes;
  s.n_clutter = synthetic_clutter;
  s.points_per_box = synthetic_points_per_box;
  s.noise = synthetic_noise;
  if (class_set == "car") {
    s.cls = ObjectClass::Car;
  } else {
    s.cls = ObjectClass::Pedestrian;
    s.l_min = 0.6;
    s.l_max = 1.0;
    s.w_min = 0.5;
    s.w_max = 0.7;
    s.h_min = 1.6;
    s.h_max = 1.9;
  }
  // The sine heading residual is injective only within a quarter turn of an
  // anchor, and past thirty degrees no axis aligned anchor overlaps an
  // elongated box enough to match as positive. Generated headings stay
  // inside the band that is both decodable and matchable.
  s.theta_min = -M_PI / 6;
  s.theta_max = M_PI / 6;
  // Keep generated content inside the detection range with a margin.
  const double margin = 3.0;
  s.center_x_min = grid_x_min + margin;
  s.center_x_max = grid_x_max - margin;
  s.center_y_min = grid_y_min + margin;
  s.center_y_max = grid_y_max - margin;
  s.clutter_x_min = grid_x_min;
  s.clutter_x_max = grid_x_max;
  s.clutter_y_min = grid_y_min;
  s.clutter_y_max = grid_y_max;
  return s;
}

TrainConfig config_defaults(const std::string& class_set) {
  TrainConfig c;
  if (class_set == "car") return c;
  if (class_set != "pedcyc")
    throw ConfigError("config: class_set must be car or pedcyc, got '" + class_set + "'");
  c.class_set = "pedcyc";
  c.n_points = 512;
  c.radius = 0.8;
  c.pos_iou = 0.5;
  c.neg_iou = 0.35;
  c.nms_iou = 0.6;
  c.eval_iou = 0.5;
  return c;
}

TrainConfig desk_preset() {
  TrainConfig c;
  c.class_set = "car";
  c.dataset = "synthetic";
  c.synthetic_scenes = 20;
  c.synthetic_boxes = 3;
  c.synthetic_clutter = 300;
  c.synthetic_points_per_box = 160;
  c.synthetic_noise = 0.02;
  c.n_points = 384;
  c.radius = 1.8;
  c.point_cap = 16;
  c.n_layers = 3;
  c.knn_k = 3;
  c.point_mlp = {16, 32, 32};
  c.attn_mlp = {{32, 32}, {32, 64}, {64, 128}};
  c.bev_channels = 16;
  c.grid_x_min = 0.0;
  c.grid_x_max = 32.0;
  c.grid_y_min = -16.0;
  c.grid_y_max = 16.0;
  c.grid_resolution = 0.4;
  c.sdr_block_channels = {16, 32, 64};
  c.sdr_convs_per_block = 2;
  c.sdr_branch_channels = 32;
  c.sdr_fused_channels = 32;
  // Narrow ignore band: only anchors that already fit a box well train as
  // positives, everything clearly worse trains as background. Keeps the
  // score ranking aligned with localization quality.
  c.pos_iou = 0.45;
  c.neg_iou = 0.35;
  c.nms_iou = 0.25;
  c.score_threshold = 0.5;
  c.max_detections = 10;
  c.max_steps = 200;
  c.batch_size = 2;
  // With only 200 steps the background logits are the slow part, so the
  // preset runs hotter than the full-scale defaults.
  c.learning_rate = 3e-3;
  c.seed = 0;
  c.augment = false;
  c.eval_iou = 0.5;
  c.eval_space = "bev";
  return c;
}

namespace {

int to_int(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const int r = std::stoi(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an integer, got '" + v + "'");
  }
}

std::uint64_t to_u64(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const std::uint64_t r = std::stoull(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects an unsigned integer, got '" + v + "'");
  }
}

double to_double(const std::string& key, const std::string& v) {
  try {
    std::size_t pos = 0;
    const double r = std::stod(v, &pos);
    if (pos != v.size()) throw std::invalid_argument(v);
    return r;
  } catch (const std::exception&) {
    throw ConfigError("config: key '" + key + "' expects a number, got '" + v + "'");
  }
}

bool to_bool(const std::string& key, const std::string& v) {
  if (v == "true" || v == "1") return true;
  if (v == "false" || v == "0") return false;
  throw ConfigError("config: key '" + key + "' expects true or false, got '" + v + "'");
}

std::vector<int> to_int_list(const std::string& key, const std::string& v) {
  std::vector<int> out;
  std::istringstream is(v);
  std::string item;
  while (std::getline(is, item, ',')) out.push_back(to_int(key, item));
  if (out.empty()) throw ConfigError("config: key '" + key + "' expects a comma-separated list");
  return out;
}

std::vector<std::array<int, 2>> to_pair_list(const std::string& key, const std::string& v) {
  std::vector<std::array<int, 2>> out;
  std::istringstream is(v);
  std::string group;
  while (std::getline(is, group, ';')) {
    const auto pair = to_int_list(key, group);
    if (pair.size() != 2)
      throw ConfigError("config: key '" + key + "' expects width pairs like 128,128;128,256");
    out.push_back({pair[0], pair[1]});
  }
  if (out.empty()) throw ConfigError("config: key '" + key + "' expects at least one pair");
  return out;
}

std::string join_ints(const std::vector<int>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ",";
    s += std::to_string(v[i]);
  }
  return s;
}

std::string join_pairs(const std::vector<std::array<int, 2>>& v) {
  std::string s;
  for (std::size_t i = 0; i < v.size(); ++i) {
    if (i) s += ";";
    s += std::to_string(v[i][0]) + "," + std::to_string(v[i][1]);
  }
  return s;
}

std::string fmt_double(double v) {
  std::ostringstream os;
  os.precision(17);
  os << v;
  return os.str();
}

struct Field {
  std::function<void(TrainConfig&, const std::string&, const std::string&)> set;
  std::function<std::string(const TrainConfig&)> get;
};

const std::vector<std::pair<std::string, Field>>& field_table() {
  static const std::vector<std::pair<std::string, Field>> table = [] {
    std::vector<std::pair<std::string, Field>> t;
    auto add = [&](const std::string& name, auto member, auto conv, auto fmt) {
      t.push_back({name,
                   {[member, conv](TrainConfig& c, const std::string& k, const std::string& v) {
                      c.*member = conv(k, v);
                    },
                    [member, fmt](const TrainConfig& c) { return fmt(c.*member); }}});
    };
    auto str_id = [](const std::string& s) { return s; };
    auto str_conv = [](const std::string&, const std::string& v) { return v; };
    add("class_set", &TrainConfig::class_set, str_conv, str_id);
    add("dataset", &TrainConfig::dataset, str_conv, str_id);
    add("dataset_root", &TrainConfig::dataset_root, str_conv, str_id);
    add("split", &TrainConfig::split, str_conv, str_id);
    add("synthetic_scenes", &TrainConfig::synthetic_scenes, to_int, [](int v) { return std::to_string(v); });
    add("synthetic_boxes", &TrainConfig::synthetic_boxes, to_int, [](int v) { return std::to_string(v); });
    add("synthetic_clutter", &TrainConfig::synthetic_clutter, to_int, [](int v) { return std::to_string(v); });
    add("synthetic_points_per_box", &TrainConfig::synthetic_points_per_box, to_int,
        [](int v) { return std::to_string(v); });
    add("synthetic_noise", &TrainConfig::synthetic_noise, to_double, fmt_double);
    add("n_points", &TrainConfig::n_points, to_int, [](int v) { return std::to_string(v); });
    add("radius", &TrainConfig::radius, to_double, fmt_double);
    add("point_cap", &TrainConfig::point_cap, to_int, [](int v) { return std::to_string(v); });
    add("n_layers", &TrainConfig::n_layers, to_int, [](int v) { return std::to_string(v); });
    add("knn_k", &TrainConfig::knn_k, to_int, [](int v) { return std::to_string(v); });
    add("point_mlp", &TrainConfig::point_mlp, to_int_list, join_ints);
    add("attn_mlp", &TrainConfig::attn_mlp, to_pair_list, join_pairs);
    add("global_gate", &TrainConfig::global_gate, str_conv, str_id);
    add("relative_coords", &TrainConfig::relative_coords, to_bool,
        [](bool v) { return std::string(v ? "true" : "false"); });
    add("bev_channels", &TrainConfig::bev_channels, to_int, [](int v) { return std::to_string(v); });
    add("grid_x_min", &TrainConfig::grid_x_min, to_double, fmt_double);
    add("grid_x_max", &TrainConfig::grid_x_max, to_double, fmt_double);
    add("grid_y_min", &TrainConfig::grid_y_min, to_double, fmt_double);
    add("grid_y_max", &TrainConfig::grid_y_max, to_double, fmt_double);
    add("grid_resolution", &TrainConfig::grid_resolution, to_double, fmt_double);
    add("sdr_block_channels", &TrainConfig::sdr_block_channels, to_int_list, join_ints);
    add("sdr_convs_per_block", &TrainConfig::sdr_convs_per_block, to_int,
        [](int v) { return std::to_string(v); });
    add("sdr_branch_channels", &TrainConfig::sdr_branch_channels, to_int,
        [](int v) { return std::to_string(v); });
    add("sdr_fused_channels", &TrainConfig::sdr_fused_channels, to_int,
        [](int v) { return std::to_string(v); });
    add("head_variant", &TrainConfig::head_variant, str_conv, str_id);
    add("anchor_z", &TrainConfig::anchor_z, to_double, fmt_double);
    add("pos_iou", &TrainConfig::pos_iou, to_double, fmt_double);
    add("neg_iou", &TrainConfig::neg_iou, to_double, fmt_double);
    add("nms_iou", &TrainConfig::nms_iou, to_double, fmt_double);
    add("nms_space", &TrainConfig::nms_space, str_conv, str_id);
    add("score_threshold", &TrainConfig::score_threshold, to_double, fmt_double);
    add("max_detections", &TrainConfig::max_detections, to_int, [](int v) { return std::to_string(v); });
    add("learning_rate", &TrainConfig::learning_rate, to_double, fmt_double);
    add("lr_decay_epochs", &TrainConfig::lr_decay_epochs, to_int_list, join_ints);
    add("lr_decay_factor", &TrainConfig::lr_decay_factor, to_double, fmt_double);
    add("epochs", &TrainConfig::epochs, to_int, [](int v) { return std::to_string(v); });
    add("max_steps", &TrainConfig::max_steps, to_int, [](int v) { return std::to_string(v); });
    add("batch_size", &TrainConfig::batch_size, to_int, [](int v) { return std::to_string(v); });
    add("seed", &TrainConfig::seed, to_u64, [](std::uint64_t v) { return std::to_string(v); });
    add("augment", &TrainConfig::augment, to_bool,
        [](bool v) { return std::string(v ? "true" : "false"); });
    add("ap_mode", &TrainConfig::ap_mode, to_int, [](int v) { return std::to_string(v); });
    add("eval_iou", &TrainConfig::eval_iou, to_double, fmt_double);
    add("eval_space", &TrainConfig::eval_space, str_conv, str_id);
    return t;
  }();
  return table;
}

const Field* find_field(const std::string& key) {
  for (const auto& [name, f] : field_table())
    if (name == key) return &f;
  return nullptr;
}

}  // namespace

TrainConfig parse_config(const std::string& text) {
  // First pass only extracts class_set so the remaining keys land on the
  // right per-class defaults.
  std::map<std::string, std::string> kv;
  std::vector<std::string> order;
  std::istringstream is(text);
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    const auto hash = line.find('#');
    if (hash != std::string::npos) line = line.substr(0, hash);
    const auto notspace = line.find_first_not_of(" \t\r");
    if (notspace == std::string::npos) continue;
    const auto eq = line.find('=');
    if (eq == std::string::npos)
      throw ConfigError("config: line " + std::to_string(line_no) + " is not 'key = value'");
    auto trim = [](std::string s) {
      const auto b = s.find_first_not_of(" \t\r");
      const auto e = s.find_last_not_of(" \t\r");
      return b == std::string::npos ? std::string() : s.substr(b, e - b + 1);
    };
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    if (key.empty()) throw ConfigError("config: line " + std::to_string(line_no) + " has an empty key");
    if (!find_field(key)) throw ConfigError("config: unknown key '" + key + "'");
    if (kv.count(key)) throw ConfigError("config: duplicate key '" + key + "'");
    kv[key] = value;
    order.push_back(key);
  }
  TrainConfig cfg = config_defaults(kv.count("class_set") ? kv["class_set"] : "car");
  for (const auto& key : order) find_field(key)->set(cfg, key, kv[key]);
  return cfg;
}

TrainConfig load_config(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("config: cannot open '" + path + "'");
  std::ostringstream os;
  os << is.rdbuf();
  return parse_config(os.str());
}

std::string serialize_config(const TrainConfig& cfg) {
  std::string out;
  for (const auto& [name, f] : field_table()) out += name + " = " + f.get(cfg) + "\n";
  return out;
}

void validate_config(const TrainConfig& cfg) {
  if (cfg.class_set != "car" && cfg.class_set != "pedcyc")
    throw ConfigError("config: class_set must be car or pedcyc");
  if (cfg.dataset != "synthetic" && cfg.dataset != "kitti")
    throw ConfigError("config: dataset must be synthetic or kitti");
  if (cfg.dataset == "kitti" && cfg.dataset_root.empty())
    throw ConfigError("config: dataset_root is required for the kitti dataset");
  if (cfg.n_points < 1) throw ConfigError("config: n_points must be positive");
  if (cfg.radius <= 0) throw ConfigError("config: radius must be positive");
  if (cfg.n_layers < 1) throw ConfigError("config: n_layers must be at least 1");
  if (cfg.knn_k < 1) throw ConfigError("config: knn_k must be at least 1");
  if (cfg.knn_k >= cfg.n_points) throw ConfigError("config: knn_k must be below n_points");
  if (cfg.point_mlp.empty()) throw ConfigError("config: point_mlp needs at least one width");
  for (int w : cfg.point_mlp)
    if (w < 1) throw ConfigError("config: point_mlp widths must be positive");
  if (static_cast<int>(cfg.attn_mlp.size()) != cfg.n_layers)
    throw ConfigError("config: attn_mlp needs exactly n_layers width pairs, got " +
                      std::to_string(cfg.attn_mlp.size()) + " for n_layers " +
                      std::to_string(cfg.n_layers));
  for (const auto& p : cfg.attn_mlp)
    if (p[0] < 1 || p[1] < 1) throw ConfigError("config: attn_mlp widths must be positive");
  if (cfg.global_gate != "per_voxel" && cfg.global_gate != "per_layer" && cfg.global_gate != "off")
    throw ConfigError("config: global_gate must be per_voxel, per_layer or off");
  if (cfg.bev_channels < 1) throw ConfigError("config: bev_channels must be positive");
  if (cfg.grid_x_max <= cfg.grid_x_min || cfg.grid_y_max <= cfg.grid_y_min)
    throw ConfigError("config: grid extent is empty");
  if (cfg.grid_resolution <= 0) throw ConfigError("config: grid_resolution must be positive");
  if (cfg.grid_h() % 8 != 0 || cfg.grid_w() % 8 != 0)
    throw ConfigError("config: grid is " + std::to_string(cfg.grid_h()) + "x" +
                      std::to_string(cfg.grid_w()) + "; both extents must be divisible by 8");
  if (cfg.sdr_block_channels.size() != 3)
    throw ConfigError("config: sdr_block_channels needs exactly 3 entries");
  for (int c : cfg.sdr_block_channels)
    if (c < 1) throw ConfigError("config: sdr_block_channels must be positive");
  if (cfg.sdr_convs_per_block < 1) throw ConfigError("config: sdr_convs_per_block must be positive");
  if (cfg.sdr_branch_channels < 1 || cfg.sdr_fused_channels < 1)
    throw ConfigError("config: sdr channel counts must be positive");
  if (cfg.head_variant != "sdr" && cfg.head_variant != "dr" && cfg.head_variant != "sr")
    throw ConfigError("config: head_variant must be sdr, dr or sr");
  if (!(0.0 <= cfg.neg_iou && cfg.neg_iou < cfg.pos_iou && cfg.pos_iou <= 1.0))
    throw ConfigError("config: need 0 <= neg_iou < pos_iou <= 1");
  if (cfg.nms_iou < 0 || cfg.nms_iou > 1) throw ConfigError("config: nms_iou must be in [0,1]");
  if (cfg.nms_space != "bev" && cfg.nms_space != "3d")
    throw ConfigError("config: nms_space must be bev or 3d");
  if (cfg.score_threshold < 0 || cfg.score_threshold >= 1)
    throw ConfigError("config: score_threshold must be in [0,1)");
  if (cfg.max_detections < 1) throw ConfigError("config: max_detections must be positive");
  if (cfg.learning_rate <= 0) throw ConfigError("config: learning_rate must be positive");
  if (cfg.lr_decay_factor <= 0 || cfg.lr_decay_factor > 1)
    throw ConfigError("config: lr_decay_factor must be in (0,1]");
  if (cfg.epochs < 1) throw ConfigError("config: epochs must be positive");
  if (cfg.max_steps < 0) throw ConfigError("config: max_steps must be nonnegative");
  if (cfg.batch_size < 1) throw ConfigError("config: batch_size must be positive");
  if (cfg.ap_mode != 11 && cfg.ap_mode != 40)
    throw ConfigError("config: ap_mode must be 11 or 40");
  if (cfg.eval_iou <= 0 || cfg.eval_iou > 1) throw ConfigError("config: eval_iou must be in (0,1]");
  if (cfg.eval_space != "3d" && cfg.eval_space != "bev")
    throw ConfigError("config: eval_space must be 3d or bev");
}

void validate_for_training(const TrainConfig& cfg) {
  validate_config(cfg);
  if (cfg.dataset == "synthetic") {
    if (cfg.synthetic_scenes < 1) throw ConfigError("config: synthetic_scenes must be positive");
    if (cfg.synthetic_boxes < 1)
      throw ConfigError("config: training on synthetic scenes requires synthetic_boxes >= 1");
  }
}

}  // namespace svga
