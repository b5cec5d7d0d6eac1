#include "svga/kitti.hpp"

#include "svga/rng.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <filesystem>
#include <fstream>
#include <numeric>
#include <sstream>

namespace svga {

namespace fs = std::filesystem;

std::vector<Point> load_velodyne(const std::string& path) {
  std::ifstream is(path, std::ios::binary | std::ios::ate);
  if (!is) throw IoError("velodyne: cannot open '" + path + "'");
  const std::streamoff len = is.tellg();
  if (len % 16 != 0)
    throw ParseError("velodyne: '" + path + "' is " + std::to_string(len) +
                     " bytes, not a multiple of 16");
  is.seekg(0);
  std::vector<Point> out;
  out.reserve(static_cast<std::size_t>(len / 16));
  char buf[16];
  for (std::size_t rec = 0; rec < static_cast<std::size_t>(len / 16); ++rec) {
    if (!is.read(buf, 16)) throw IoError("velodyne: short read in '" + path + "'");
    float f[4];
    for (int i = 0; i < 4; ++i) {
      std::uint32_t u = 0;
      for (int b = 0; b < 4; ++b)
        u |= static_cast<std::uint32_t>(static_cast<unsigned char>(buf[4 * i + b])) << (8 * b);
      f[i] = std::bit_cast<float>(u);
    }
    for (int i = 0; i < 4; ++i)
      if (!std::isfinite(f[i]))
        throw ParseError("velodyne: non-finite value in record " + std::to_string(rec) + " of '" +
                         path + "'");
    Point p;
    p.x = f[0];
    p.y = f[1];
    p.z = f[2];
    p.intensity = std::clamp(static_cast<double>(f[3]), 0.0, 1.0);
    out.push_back(p);
  }
  return out;
}

void save_velodyne(const std::string& path, const std::vector<Point>& points) {
  std::ofstream os(path, std::ios::binary);
  if (!os) throw IoError("velodyne: cannot open '" + path + "' for writing");
  for (const auto& p : points) {
    const float f[4] = {static_cast<float>(p.x), static_cast<float>(p.y), static_cast<float>(p.z),
                        static_cast<float>(p.intensity)};
    char buf[16];
    for (int i = 0; i < 4; ++i) {
      const auto u = std::bit_cast<std::uint32_t>(f[i]);
      for (int b = 0; b < 4; ++b) buf[4 * i + b] = static_cast<char>((u >> (8 * b)) & 0xff);
    }
    os.write(buf, 16);
  }
  if (!os) throw IoError("velodyne: write to '" + path + "' failed");
}

std::array<double, 3> CalibTransform::to_cam(const std::array<double, 3>& p) const {
  std::array<double, 3> o;
  for (int i = 0; i < 3; ++i) o[i] = r[3 * i] * p[0] + r[3 * i + 1] * p[1] + r[3 * i + 2] * p[2] + t[i];
  return o;
}

std::array<double, 3> CalibTransform::to_velo(const std::array<double, 3>& p) const {
  const double d[3] = {p[0] - t[0], p[1] - t[1], p[2] - t[2]};
  std::array<double, 3> o;
  for (int i = 0; i < 3; ++i) o[i] = r[i] * d[0] + r[i + 3] * d[1] + r[i + 6] * d[2];
  return o;
}

CalibTransform load_calib(const std::string& path) {
  std::ifstream is(path);
  if (!is) throw IoError("calib: cannot open '" + path + "'");
  std::array<double, 9> r0{1, 0, 0, 0, 1, 0, 0, 0, 1};
  std::array<double, 12> tr{1, 0, 0, 0, 0, 1, 0, 0, 0, 0, 1, 0};
  bool have_r0 = false, have_tr = false;
  std::string line;
  while (std::getline(is, line)) {
    std::istringstream ls(line);
    std::string key;
    ls >> key;
    if (key == "R0_rect:" || key == "R_rect:") {
      for (auto& v : r0)
        if (!(ls >> v)) throw ParseError("calib: malformed R0_rect in '" + path + "'");
      have_r0 = true;
    } else if (key == "Tr_velo_to_cam:" || key == "Tr_velo_cam:") {
      for (auto& v : tr)
        if (!(ls >> v)) throw ParseError("calib: malformed Tr_velo_to_cam in '" + path + "'");
      have_tr = true;
    }
  }
  if (!have_r0 && !have_tr)
    throw ParseError("calib: '" + path + "' has neither R0_rect nor Tr_velo_to_cam");
  CalibTransform c;
  // R = R0 * R_tr, t = R0 * t_tr.
  for (int i = 0; i < 3; ++i) {
    for (int j = 0; j < 3; ++j) {
      double acc = 0.0;
      for (int k = 0; k < 3; ++k) acc += r0[3 * i + k] * tr[4 * k + j];
      c.r[3 * i + j] = acc;
    }
    double acc = 0.0;
    for (int k = 0; k < 3; ++k) acc += r0[3 * i + k] * tr[4 * k + 3];
    c.t[i] = acc;
  }
  return c;
}

Difficulty assign_difficulty(double truncation, int occlusion, double bbox_height,
                             bool bbox_valid) {
  if (!bbox_valid) return Difficulty::Unknown;
  if (bbox_height >= 40.0 && occlusion <= 0 && truncation <= 0.15) return Difficulty::Easy;
  if (bbox_height >= 25.0 && occlusion <= 1 && truncation <= 0.30) return Difficulty::Moderate;
  if (bbox_height >= 25.0 && occlusion <= 2 && truncation <= 0.50) return Difficulty::Hard;
  return Difficulty::Unknown;
}

namespace {

struct LabelRow {
  std::string type;
  double truncation, alpha;
  int occlusion;
  double x1, y1, x2, y2;
  double h, w, l;
  double cx, cy, cz;  // camera frame, bottom face center
  double ry;
  double score;
  bool has_score;
};

LabelRow parse_label_line(const std::string& line, const std::string& path, int line_no) {
  std::istringstream ls(line);
  LabelRow r;
  if (!(ls >> r.type >> r.truncation >> r.occlusion >> r.alpha >> r.x1 >> r.y1 >> r.x2 >> r.y2 >>
        r.h >> r.w >> r.l >> r.cx >> r.cy >> r.cz >> r.ry))
    throw ParseError("labels: '" + path + "' line " + std::to_string(line_no) + " is malformed");
  r.has_score = static_cast<bool>(ls >> r.score);
  return r;
}

LabeledBox row_to_box(const LabelRow& r, const CalibTransform& calib) {
  LabeledBox b;
  b.cls = class_from_name(r.type);
  const auto c = calib.to_velo({r.cx, r.cy - r.h / 2.0, r.cz});
  b.box.x = c[0];
  b.box.y = c[1];
  b.box.z = c[2];
  b.box.l = r.l;
  b.box.w = r.w;
  b.box.h = r.h;
  b.box.theta = normalize_angle(-r.ry - M_PI / 2.0);
  const bool bbox_valid = r.x2 > r.x1 && r.y2 > r.y1 && r.x1 >= 0 && r.y1 >= 0;
  b.difficulty = assign_difficulty(r.truncation, r.occlusion, r.y2 - r.y1, bbox_valid);
  return b;
}

template <typename Fn>
void for_each_label_row(const std::string& path, Fn&& fn) {
  std::ifstream is(path);
  if (!is) throw IoError("labels: cannot open '" + path + "'");
  std::string line;
  int line_no = 0;
  while (std::getline(is, line)) {
    ++line_no;
    if (line.find_first_not_of(" \t\r") == std::string::npos) continue;
    fn(parse_label_line(line, path, line_no));
  }
}

void write_label_line(std::ostream& os, const Box7& box, ObjectClass cls,
                      const CalibTransform& calib, const double* score) {
  const auto c = calib.to_cam({box.x, box.y, box.z});
  const double ry = normalize_angle(-box.theta - M_PI / 2.0);
  const double alpha = normalize_angle(ry - std::atan2(c[0], c[2]));
  char buf[512];
  int n = std::snprintf(buf, sizeof(buf),
                        "%s %.2f %d %.6f %.2f %.2f %.2f %.2f %.6f %.6f %.6f %.6f %.6f %.6f %.6f",
                        class_name(cls), -1.0, -1, alpha, -1.0, -1.0, -1.0, -1.0, box.h, box.w,
                        box.l, c[0], c[1] + box.h / 2.0, c[2], ry);
  if (score) n += std::snprintf(buf + n, sizeof(buf) - n, " %.6f", *score);
  os << buf << "\n";
}

}  // namespace

std::vector<LabeledBox> load_labels(const std::string& path, const CalibTransform& calib) {
  std::vector<LabeledBox> out;
  for_each_label_row(path, [&](const LabelRow& r) { out.push_back(row_to_box(r, calib)); });
  return out;
}

std::vector<Detection> load_detections(const std::string& path, const CalibTransform& calib) {
  std::vector<Detection> out;
  for_each_label_row(path, [&](const LabelRow& r) {
    Detection d;
    const LabeledBox b = row_to_box(r, calib);
    d.box = b.box;
    d.cls = b.cls;
    d.score = r.has_score ? r.score : 0.0;
    out.push_back(d);
  });
  return out;
}

void save_labels(const std::string& path, const std::vector<LabeledBox>& labels,
                 const CalibTransform& calib) {
  std::ofstream os(path);
  if (!os) throw IoError("labels: cannot open '" + path + "' for writing");
  for (const auto& lb : labels) write_label_line(os, lb.box, lb.cls, calib, nullptr);
  if (!os) throw IoError("labels: write to '" + path + "' failed");
}

void save_detections(const std::string& path, const std::vector<Detection>& dets,
                     const CalibTransform& calib) {
  std::ofstream os(path);
  if (!os) throw IoError("detections: cannot open '" + path + "' for writing");
  std::vector<std::size_t> order(dets.size());
  std::iota(order.begin(), order.end(), std::size_t{0});
  std::stable_sort(order.begin(), order.end(),
                   [&](std::size_t a, std::size_t b) { return dets[a].score > dets[b].score; });
  for (std::size_t i : order) write_label_line(os, dets[i].box, dets[i].cls, calib, &dets[i].score);
  if (!os) throw IoError("detections: write to '" + path + "' failed");
}

Dataset Dataset::open_kitti(const std::string& root, const std::string& split_path) {
  Dataset d;
  d.kind_ = Kind::Kitti;
  d.root_ = root;
  if (!split_path.empty()) {
    std::ifstream is(split_path);
    if (!is) throw IoError("split: cannot open '" + split_path + "'");
    std::string line;
    while (std::getline(is, line)) {
      while (!line.empty() && (line.back() == '\r' || line.back() == ' ')) line.pop_back();
      if (!line.empty()) d.ids_.push_back(line);
    }
  } else {
    const fs::path dir = fs::path(root) / "velodyne";
    if (!fs::is_directory(dir)) throw IoError("dataset: '" + dir.string() + "' is not a directory");
    for (const auto& e : fs::directory_iterator(dir))
      if (e.path().extension() == ".bin") d.ids_.push_back(e.path().stem().string());
    std::sort(d.ids_.begin(), d.ids_.end());
  }
  return d;
}

Dataset Dataset::synthetic(const SynthConfig& cfg, int n_scenes, std::uint64_t seed) {
  if (n_scenes <= 0) throw ConfigError("dataset: synthetic scene count must be positive");
  Dataset d;
  d.kind_ = Kind::Synthetic;
  d.synth_ = cfg;
  d.seed_ = seed;
  for (int i = 0; i < n_scenes; ++i) {
    char buf[16];
    std::snprintf(buf, sizeof(buf), "%06d", i);
    d.ids_.emplace_back(buf);
  }
  return d;
}

Scene Dataset::load(std::size_t i) const {
  const std::string& id = ids_.at(i);
  if (kind_ == Kind::Synthetic) return generate_synthetic(synth_, mix_seed(seed_, i), id);
  Scene s;
  s.id = id;
  s.points = load_velodyne((fs::path(root_) / "velodyne" / (id + ".bin")).string());
  CalibTransform calib;
  const fs::path calib_path = fs::path(root_) / "calib" / (id + ".txt");
  if (fs::exists(calib_path)) calib = load_calib(calib_path.string());
  const fs::path label_path = fs::path(root_) / "label_2" / (id + ".txt");
  if (fs::exists(label_path)) s.labels = load_labels(label_path.string(), calib);
  return s;
}

void Dataset::write_kitti(const std::string& root) const {
  const fs::path r(root);
  fs::create_directories(r / "velodyne");
  fs::create_directories(r / "label_2");
  const CalibTransform identity;
  for (std::size_t i = 0; i < size(); ++i) {
    const Scene s = load(i);
    save_velodyne((r / "velodyne" / (s.id + ".bin")).string(), s.points);
    save_labels((r / "label_2" / (s.id + ".txt")).string(), s.labels, identity);
  }
}

}  // namespace svga
