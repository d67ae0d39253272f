#include "csmsckf/stream_io.hpp"

#include <algorithm>
#include <cstdio>
#include <fstream>
#include <map>
#include <sstream>
#include <stdexcept>

#include <json.hpp>

namespace csmsckf {

namespace {

std::string num(double x) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", x);
  return buf;
}

class CsvOut {
 public:
  CsvOut(const std::filesystem::path& path, const std::string& header) : out_(path), path_(path) {
    if (!out_) throw std::runtime_error("cannot write " + path.string());
    out_ << header << '\n';
  }
  template <typename... T>
  void row(const T&... cells) {
    bool first = true;
    ((out_ << (first ? "" : ",") << cell(cells), first = false), ...);
    out_ << '\n';
  }

 private:
  static std::string cell(double x) { return num(x); }
  static std::string cell(int x) { return std::to_string(x); }
  static std::string cell(const std::string& s) { return s; }
  static std::string cell(const Vec2& v) { return num(v(0)) + "," + num(v(1)); }
  static std::string cell(const Vec3& v) {
    return num(v(0)) + "," + num(v(1)) + "," + num(v(2));
  }
  static std::string cell(const UnitQuatJPL& q) {
    return num(q.x()) + "," + num(q.y()) + "," + num(q.z()) + "," + num(q.w());
  }
  std::ofstream out_;
  std::filesystem::path path_;
};

// Rows of a CSV file with a header line, as strings.
std::vector<std::vector<std::string>> read_csv(const std::filesystem::path& path,
                                               std::size_t min_cols) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open " + path.string());
  std::vector<std::vector<std::string>> rows;
  std::string line;
  std::getline(in, line);  // header
  int lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (!line.empty() && line.back() == '\r') line.pop_back();
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::stringstream ss(line);
    std::string c;
    while (std::getline(ss, c, ',')) cells.push_back(c);
    if (cells.size() < min_cols) {
      throw std::runtime_error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                               std::to_string(min_cols) + " columns");
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

double d(const std::string& s) { return std::stod(s); }
int i(const std::string& s) { return std::stoi(s); }

UnitQuatJPL quat_at(const std::vector<std::string>& r, std::size_t k) {
  return UnitQuatJPL(d(r[k]), d(r[k + 1]), d(r[k + 2]), d(r[k + 3]));
}
Vec3 vec_at(const std::vector<std::string>& r, std::size_t k) {
  return Vec3(d(r[k]), d(r[k + 1]), d(r[k + 2]));
}

nlohmann::json pose_json(const Pose& p) {
  return {{"q_xyzw", {p.rotation.x(), p.rotation.y(), p.rotation.z(), p.rotation.w()}},
          {"p", {p.translation.x(), p.translation.y(), p.translation.z()}}};
}

Pose pose_from_json(const nlohmann::json& j) {
  const auto& q = j.at("q_xyzw");
  const auto& p = j.at("p");
  Pose out;
  out.rotation = UnitQuatJPL(q.at(0), q.at(1), q.at(2), q.at(3));
  out.translation = Vec3(p.at(0), p.at(1), p.at(2));
  return out;
}

void write_keyframes(const std::filesystem::path& path, const std::vector<MapKeyframe>& kfs) {
  std::string header = "id,qx,qy,qz,qw,px,py,pz";
  for (int r = 0; r < 6; ++r) {
    for (int c = r; c < 6; ++c) header += ",c" + std::to_string(r) + std::to_string(c);
  }
  CsvOut out(path, header);
  for (const auto& kf : kfs) {
    std::string cov;
    for (int r = 0; r < 6; ++r) {
      for (int c = r; c < 6; ++c) cov += (cov.empty() ? "" : ",") + num(kf.cov(r, c));
    }
    out.row(kf.id, kf.pose.rotation, kf.pose.translation, cov);
  }
}

}  // namespace

void write_world(const SimWorld& world, const Config& cfg, const std::filesystem::path& dir) {
  std::filesystem::create_directories(dir);
  {
    CsvOut out(dir / "imu.csv", "t,wx,wy,wz,ax,ay,az");
    for (const auto& s : world.imu) out.row(s.t, s.gyro, s.accel);
  }
  {
    CsvOut out(dir / "truth.csv", "t,px,py,pz,qx,qy,qz,qw,vx,vy,vz,bgx,bgy,bgz,bax,bay,baz");
    for (const auto& s : world.imu_truth) {
      out.row(s.t, s.g_T_i.translation, s.g_T_i.rotation, s.v_G, s.bg, s.ba);
    }
  }
  {
    CsvOut out(dir / "tracks.csv", "t,feature_id,u,v");
    for (const auto& f : world.frames) {
      for (const auto& o : f.obs) out.row(f.t, o.id, o.uv);
    }
  }
  {
    CsvOut out(dir / "matches.csv", "t,keyframe_ids,landmark_id,u,v");
    for (const auto& m : world.matches) {
      std::string ids;
      for (int id : m.keyframe_ids) ids += (ids.empty() ? "" : " ") + std::to_string(id);
      for (const auto& p : m.pairs) out.row(m.t, ids, p.landmark_id, p.uv);
    }
  }
  std::vector<MapKeyframe> kfs;
  for (const auto& [id, kf] : world.map.keyframes()) kfs.push_back(kf);
  write_keyframes(dir / "map_keyframes.csv", kfs);
  {
    CsvOut out(dir / "map_landmarks.csv", "id,anchor_kf,x,y,z");
    for (const auto& [id, lm] : world.map.landmarks()) out.row(lm.id, lm.anchor_kf, lm.p);
  }
  {
    CsvOut out(dir / "map_observations.csv", "landmark_id,kf_id,u,v");
    for (const auto& [id, lm] : world.map.landmarks()) {
      for (const auto& o : world.map.observations(id)) out.row(id, o.kf_id, o.uv);
    }
  }
  {
    std::ofstream out(dir / "config.yaml");
    if (!out) throw std::runtime_error("cannot write config.yaml");
    out << dump_config(cfg);
  }

  nlohmann::ordered_json m;
  m["schema_version"] = kConfigSchemaVersion;
  m["seed"] = world.config.seed;
  m["config_hash"] = hash_hex(config_hash(cfg));
  m["true_frame_offset_g_T_l"] = pose_json(world.g_T_l);
  m["note"] = "ground truth of x_t is the configured frame offset g_T_l";
  const PinholeCamera& c = world.camera;
  m["camera"] = {{"fx", c.fx}, {"fy", c.fy}, {"cx", c.cx}, {"cy", c.cy},
                 {"width", c.width}, {"height", c.height},
                 {"i_T_c", pose_json(c.extrinsic)}};
  m["counts"] = {{"imu", world.imu.size()},
                 {"frames", world.frames.size()},
                 {"matches", world.matches.size()},
                 {"keyframes", world.map.keyframes().size()},
                 {"landmarks", world.map.landmarks().size()}};
  std::ofstream out(dir / "manifest.json");
  if (!out) throw std::runtime_error("cannot write manifest.json");
  out << m.dump(2) << '\n';
}

SimWorld read_world(const std::filesystem::path& dir, Config* cfg_out) {
  const Config cfg = load_config(dir / "config.yaml");
  if (cfg_out) *cfg_out = cfg;
  SimWorld w;
  w.config = cfg.sim;

  std::ifstream mf(dir / "manifest.json");
  if (!mf) throw std::runtime_error("cannot open " + (dir / "manifest.json").string());
  const nlohmann::json manifest = nlohmann::json::parse(mf);
  w.g_T_l = pose_from_json(manifest.at("true_frame_offset_g_T_l"));
  const auto& jc = manifest.at("camera");
  w.camera.fx = jc.at("fx");
  w.camera.fy = jc.at("fy");
  w.camera.cx = jc.at("cx");
  w.camera.cy = jc.at("cy");
  w.camera.width = jc.at("width");
  w.camera.height = jc.at("height");
  w.camera.extrinsic = pose_from_json(jc.at("i_T_c"));
  w.camera.validate();

  for (const auto& r : read_csv(dir / "imu.csv", 7)) {
    w.imu.push_back({d(r[0]), vec_at(r, 1), vec_at(r, 4)});
  }
  for (const auto& r : read_csv(dir / "truth.csv", 17)) {
    TruthSample s;
    s.t = d(r[0]);
    s.g_T_i.translation = vec_at(r, 1);
    s.g_T_i.rotation = quat_at(r, 4);
    s.v_G = vec_at(r, 8);
    s.bg = vec_at(r, 11);
    s.ba = vec_at(r, 14);
    w.imu_truth.push_back(s);
  }
  for (const auto& r : read_csv(dir / "tracks.csv", 4)) {
    const double t = d(r[0]);
    if (w.frames.empty() || std::abs(w.frames.back().t - t) > 1e-9) w.frames.push_back({t, {}});
    w.frames.back().obs.push_back({i(r[1]), Vec2(d(r[2]), d(r[3]))});
  }

  for (const auto& r : read_csv(dir / "map_keyframes.csv", 29)) {
    MapKeyframe kf;
    kf.id = i(r[0]);
    kf.pose.rotation = quat_at(r, 1);
    kf.pose.translation = vec_at(r, 5);
    std::size_t k = 8;
    for (int a = 0; a < 6; ++a) {
      for (int b = a; b < 6; ++b) kf.cov(a, b) = kf.cov(b, a) = d(r[k++]);
    }
    kf.camera = w.camera;
    w.map.add_keyframe(kf);
  }
  for (const auto& r : read_csv(dir / "map_landmarks.csv", 5)) {
    w.map.add_landmark({i(r[0]), i(r[1]), vec_at(r, 2)});
  }
  for (const auto& r : read_csv(dir / "map_observations.csv", 4)) {
    w.map.add_observation(i(r[0]), {i(r[1]), Vec2(d(r[2]), d(r[3]))});
  }

  for (const auto& r : read_csv(dir / "matches.csv", 5)) {
    const double t = d(r[0]);
    if (w.matches.empty() || std::abs(w.matches.back().t - t) > 1e-9) {
      MatchSet m;
      m.t = t;
      std::stringstream ids(r[1]);
      for (int id; ids >> id;) m.keyframe_ids.push_back(id);
      w.matches.push_back(std::move(m));
    }
    MatchSet& m = w.matches.back();
    LandmarkMatch pair;
    pair.landmark_id = i(r[2]);
    pair.uv = Vec2(d(r[3]), d(r[4]));
    for (const auto& o : w.map.observations(pair.landmark_id)) {
      if (std::find(m.keyframe_ids.begin(), m.keyframe_ids.end(), o.kf_id) !=
          m.keyframe_ids.end()) {
        pair.kf_obs.push_back(o);
      }
    }
    m.pairs.push_back(std::move(pair));
  }
  return w;
}

}  // namespace csmsckf
