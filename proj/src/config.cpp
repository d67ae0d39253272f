#include "csmsckf/config.hpp"

#include <charconv>
#include <cstdio>
#include <fstream>
#include <set>
#include <sstream>
#include <stdexcept>

#include <yaml-cpp/yaml.h>

namespace csmsckf {

namespace {

// Both directions walk the same binding list, so the parser and the dump cannot drift.
class Reader {
 public:
  Reader(const YAML::Node& node, std::string path)
      : node_(node), path_(std::move(path)), present_(node.IsDefined() && !node.IsNull()) {
    if (present_ && !node_.IsMap()) throw std::invalid_argument("config: " + path_ + " must be a mapping");
  }

  template <typename T>
  void operator()(const char* key, T& field) {
    used_.insert(key);
    if (!present_ || !node_[key]) return;
    try {
      read(node_[key], field);
    } catch (const YAML::Exception& e) {
      throw std::invalid_argument("config: bad value for " + where() + key + ": " + e.msg);
    }
  }

  template <typename F>
  void section(const char* key, F&& bind) {
    used_.insert(key);
    Reader sub(present_ ? node_[key] : YAML::Node(), where() + key);
    bind(sub);
    sub.finish();
  }

  void finish() const {
    if (!present_) return;
    for (const auto& kv : node_) {
      const std::string k = kv.first.as<std::string>();
      if (!used_.count(k)) throw std::invalid_argument("config: unknown key " + where() + k);
    }
  }

 private:
  std::string where() const { return path_.empty() ? "" : path_ + "."; }

  template <typename T>
  static void read(const YAML::Node& n, T& field) {
    field = n.as<T>();
  }
  static void read(const YAML::Node& n, Vec3& field) {
    if (!n.IsSequence() || n.size() != 3) throw YAML::Exception(n.Mark(), "expected [x, y, z]");
    for (int i = 0; i < 3; ++i) field(i) = n[i].as<double>();
  }
  static void read(const YAML::Node& n, Mat6& field) {
    if (!n.IsSequence() || n.size() != 6) {
      throw YAML::Exception(n.Mark(), "expected 6 diagonal entries");
    }
    field.setZero();
    for (int i = 0; i < 6; ++i) field(i, i) = n[i].as<double>();
  }
  static void read(const YAML::Node& n, Mode& field) { field = mode_from_string(n.as<std::string>()); }

  YAML::Node node_;
  std::string path_;
  bool present_;
  std::set<std::string> used_;
};

class Writer {
 public:
  explicit Writer(YAML::Emitter& out) : out_(out) {}

  template <typename T>
  void operator()(const char* key, const T& field) {
    out_ << YAML::Key << key << YAML::Value;
    write(field);
  }

  template <typename F>
  void section(const char* key, F&& bind) {
    out_ << YAML::Key << key << YAML::Value << YAML::BeginMap;
    bind(*this);
    out_ << YAML::EndMap;
  }

 private:
  template <typename T>
  void write(const T& v) {
    out_ << v;
  }
  // Shortest text that parses back to the same double.
  void write(double v) {
    char buf[32];
    const auto res = std::to_chars(buf, buf + sizeof(buf), v);
    out_ << std::string(buf, res.ptr);
  }
  void write(const Vec3& v) {
    out_ << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 3; ++i) write(v(i));
    out_ << YAML::EndSeq;
  }
  void write(const Mat6& m) {
    out_ << YAML::Flow << YAML::BeginSeq;
    for (int i = 0; i < 6; ++i) write(m(i, i));
    out_ << YAML::EndSeq;
  }
  void write(const Mode& m) { out_ << to_string(m); }
  void write(const std::uint64_t& v) { out_ << static_cast<unsigned long long>(v); }

  YAML::Emitter& out_;
};

template <typename B, typename N>
void bind_imu_noise(B& b, N& n) {
  b("sigma_g", n.sigma_g);
  b("sigma_a", n.sigma_a);
  b("sigma_bg", n.sigma_bg);
  b("sigma_ba", n.sigma_ba);
}

template <typename B, typename S>
void bind_sim(B& b, S& s) {
  b("seed", s.seed);
  b("imu_rate", s.imu_rate);
  b("camera_rate", s.camera_rate);
  b("imu_noise_enabled", s.imu_noise_enabled);
  b("initial_gyro_bias_sigma", s.initial_gyro_bias_sigma);
  b("initial_accel_bias_sigma", s.initial_accel_bias_sigma);
  b("sigma_px", s.sigma_px);
  b("frame_offset_yaw", s.frame_offset_yaw);
  b("frame_offset_translation", s.frame_offset_translation);
  b.section("imu_noise", [&](auto& sb) { bind_imu_noise(sb, s.imu_noise); });
  b.section("trajectory", [&](auto& sb) {
    auto& t = s.trajectory;
    sb("type", t.type);
    sb("speed", t.speed);
    sb("radius", t.radius);
    sb("height", t.height);
    sb("static_duration", t.static_duration);
    sb("waypoint_file", t.waypoint_file);
  });
  b.section("map", [&](auto& sb) {
    auto& m = s.map;
    sb("sigma_p2", m.sigma_p2);
    sb("sigma_o2", m.sigma_o2);
    sb("keyframe_period", m.keyframe_period);
    sb("lateral_offset", m.lateral_offset);
    sb("landmarks_per_keyframe", m.landmarks_per_keyframe);
    sb("min_depth", m.min_depth);
    sb("max_depth", m.max_depth);
    sb("covisible_keyframes", m.covisible_keyframes);
  });
  b.section("match", [&](auto& sb) {
    auto& m = s.match;
    sb("period", m.period);
    sb("dropout", m.dropout);
    sb("dry_spell_start", m.dry_spell_start);
    sb("dry_spell_duration", m.dry_spell_duration);
    sb("keyframes", m.keyframes);
    sb("pairs_per_keyframe", m.pairs_per_keyframe);
    sb("min_pairs", m.min_pairs);
    sb("max_keyframe_distance", m.max_keyframe_distance);
  });
  b.section("features", [&](auto& sb) {
    auto& f = s.features;
    sb("points_per_meter", f.points_per_meter);
    sb("min_lateral", f.min_lateral);
    sb("max_lateral", f.max_lateral);
    sb("min_height", f.min_height);
    sb("max_height", f.max_height);
    sb("max_depth", f.max_depth);
    sb("image_margin", f.image_margin);
    sb("max_track_length", f.max_track_length);
  });
}

template <typename B, typename F>
void bind_filter(B& b, F& f) {
  b("mode", f.mode);
  b("relinearize", f.relinearize);
  b("relin_threshold_px", f.relin_threshold_px);
  b("relin_shift_mean", f.relin_shift_mean);
  b("max_clones", f.max_clones);
  b("sigma_px", f.sigma_px);
  b("max_rows", f.max_rows);
  b("chi2_gating", f.chi2_gating);
  b("max_keyframes", f.max_keyframes);
  b("full_ekf", f.full_ekf);
  b("rel_transform_prior", f.rel_transform_prior);
  b.section("imu_noise", [&](auto& sb) { bind_imu_noise(sb, f.imu_noise); });
  b.section("initial_sigma", [&](auto& sb) {
    sb("theta", f.init_sigma_theta);
    sb("p", f.init_sigma_p);
    sb("v", f.init_sigma_v);
    sb("bg", f.init_sigma_bg);
    sb("ba", f.init_sigma_ba);
  });
}

}  // namespace

void Config::validate() const {
  if (schema_version != kConfigSchemaVersion) {
    throw std::invalid_argument("config: unsupported schema_version " +
                                std::to_string(schema_version));
  }
  sim.validate();
  filter.validate();
}

Config parse_config(const std::string& yaml_text) {
  YAML::Node root;
  try {
    root = YAML::Load(yaml_text);
  } catch (const YAML::Exception& e) {
    throw std::invalid_argument(std::string("config: ") + e.what());
  }
  Config cfg;
  if (!root || root.IsNull()) {
    throw std::invalid_argument("config: empty document (schema_version is required)");
  }
  if (!root["schema_version"]) throw std::invalid_argument("config: missing schema_version");
  Reader r(root, "");
  r("schema_version", cfg.schema_version);
  if (cfg.schema_version != kConfigSchemaVersion) {
    throw std::invalid_argument("config: unsupported schema_version " +
                                std::to_string(cfg.schema_version));
  }
  r.section("sim", [&](auto& b) { bind_sim(b, cfg.sim); });
  r.section("filter", [&](auto& b) { bind_filter(b, cfg.filter); });
  r.finish();
  cfg.validate();
  return cfg;
}

Config load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::stringstream ss;
  ss << in.rdbuf();
  return parse_config(ss.str());
}

std::string dump_config(const Config& cfg) {
  YAML::Emitter out;
  out << YAML::BeginMap;
  Writer w(out);
  w("schema_version", cfg.schema_version);
  w.section("sim", [&](auto& b) { bind_sim(b, cfg.sim); });
  w.section("filter", [&](auto& b) { bind_filter(b, cfg.filter); });
  out << YAML::EndMap;
  return std::string(out.c_str()) + "\n";
}

std::uint64_t config_hash(const Config& cfg) {
  Config c = cfg;
  c.sim.seed = 0;
  const std::string text = dump_config(c);
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char ch : text) {
    h ^= ch;
    h *= 0x100000001b3ULL;
  }
  return h;
}

std::string hash_hex(std::uint64_t h) {
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

}  // namespace csmsckf
