#include "tmkt/data_forge.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <fstream>
#include <iostream>
#include <numbers>
#include <sstream>

#include <json.hpp>

#include "tmkt/errors.hpp"
#include "tmkt/rng.hpp"

namespace tmkt::data {

using nlohmann::json;

namespace {

constexpr double kPi = std::numbers::pi;
constexpr int kMaxClasses = 3 * kShapeFamilies;

bool inside(const Scene& s, double x, double y, double t) {
  // Shape-local coordinates: translate to the current center, undo rotation.
  const double dx = x - (s.cx + s.vx * t);
  const double dy = y - (s.cy + s.vy * t);
  const double c = std::cos(s.orientation), sn = std::sin(s.orientation);
  const double u = c * dx + sn * dy;
  const double v = -sn * dx + c * dy;
  const double r = s.size;
  switch (s.family) {
    case ShapeFamily::Square:
      return std::abs(u) <= r && std::abs(v) <= r;
    case ShapeFamily::Circle: {
      // Variants past the first five classes become ellipses so rotation matters.
      const double aspect = s.orientation == 0.0 ? 1.0 : 0.6;
      return u * u + (v * v) / (aspect * aspect) <= r * r;
    }
    case ShapeFamily::Triangle: {
      // Equilateral, circumradius r, one vertex along +v.
      const double h = r * 0.5;
      if (v < -h) return false;
      const double slope = std::sqrt(3.0);
      return slope * u + v <= r && -slope * u + v <= r;
    }
    case ShapeFamily::Cross: {
      const double arm = r / 3.0;
      return (std::abs(u) <= r && std::abs(v) <= arm) || (std::abs(v) <= r && std::abs(u) <= arm);
    }
    case ShapeFamily::Bar:
      return std::abs(u) <= r && std::abs(v) <= r * 0.3;
  }
  return false;
}

void hsv_to_rgb(double h, double s, double v, double out[3]) {
  const double c = v * s;
  const double hp = std::fmod(h, 1.0) * 6.0;
  const double x = c * (1.0 - std::abs(std::fmod(hp, 2.0) - 1.0));
  double r = 0, g = 0, b = 0;
  if (hp < 1) r = c, g = x;
  else if (hp < 2) r = x, g = c;
  else if (hp < 3) g = c, b = x;
  else if (hp < 4) g = x, b = c;
  else if (hp < 5) r = x, b = c;
  else r = c, b = x;
  const double m = v - c;
  out[0] = r + m;
  out[1] = g + m;
  out[2] = b + m;
}

json params_to_json(const GeneratorParams& p) {
  return {{"classes", p.classes},
          {"per_class", p.per_class},
          {"height", p.height},
          {"width", p.width},
          {"timesteps", p.timesteps},
          {"seed", p.seed},
          {"contrast_threshold", p.contrast_threshold},
          {"max_event_density", p.max_event_density},
          {"test_fraction", p.test_fraction},
          {"min_speed", p.min_speed},
          {"max_speed", p.max_speed},
          {"supersample", p.supersample}};
}

GeneratorParams params_from_json(const json& j) {
  GeneratorParams p;
  p.classes = j.value("classes", p.classes);
  p.per_class = j.value("per_class", p.per_class);
  p.height = j.value("height", p.height);
  p.width = j.value("width", p.width);
  p.timesteps = j.value("timesteps", p.timesteps);
  p.seed = j.value("seed", p.seed);
  p.contrast_threshold = j.value("contrast_threshold", p.contrast_threshold);
  p.max_event_density = j.value("max_event_density", p.max_event_density);
  p.test_fraction = j.value("test_fraction", p.test_fraction);
  p.min_speed = j.value("min_speed", p.min_speed);
  p.max_speed = j.value("max_speed", p.max_speed);
  p.supersample = j.value("supersample", p.supersample);
  return p;
}

std::string sample_id(int label, int index) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "c%02d_%04d", label, index);
  return buf;
}

int test_count(const GeneratorParams& p) {
  return static_cast<int>(std::lround(p.per_class * p.test_fraction));
}

}  // namespace

void GeneratorParams::validate() const {
  auto fail = [](const std::string& what) { throw Error(ErrorCategory::Config, "dataset generator: " + what); };
  if (classes < 2 || classes > kMaxClasses) fail("classes must lie in [2, " + std::to_string(kMaxClasses) + "]");
  if (per_class < 1) fail("per_class must be >= 1");
  if (height < 8 || width < 8 || height > 512 || width > 512) fail("height and width must lie in [8, 512]");
  if (timesteps < 1 || timesteps > 64) fail("timesteps must lie in [1, 64]");
  if (!(contrast_threshold > 0.0 && contrast_threshold < 1.0)) fail("contrast_threshold must lie in (0,1)");
  if (!(max_event_density > 0.0 && max_event_density <= 1.0)) fail("max_event_density must lie in (0,1]");
  if (!(test_fraction >= 0.0 && test_fraction < 1.0)) fail("test_fraction must lie in [0,1)");
  if (!(min_speed >= 0.0 && max_speed >= min_speed)) fail("need 0 <= min_speed <= max_speed");
  if (supersample < 1 || supersample > 16) fail("supersample must lie in [1, 16]");
}

ShapeFamily family_of_class(int label) { return static_cast<ShapeFamily>(label % kShapeFamilies); }

std::string class_name(int label) {
  static const char* names[] = {"square", "circle", "triangle", "cross", "bar"};
  std::string name = names[label % kShapeFamilies];
  if (label >= kShapeFamilies) name += "_r" + std::to_string(30 * (label / kShapeFamilies));
  return name;
}

Scene random_scene(const GeneratorParams& params, int label, std::uint64_t seed) {
  Engine rng(seed);
  std::uniform_real_distribution<double> unit(0.0, 1.0);
  auto uniform = [&](double lo, double hi) { return lo + (hi - lo) * unit(rng); };

  Scene s;
  s.family = family_of_class(label);
  const double base = (label / kShapeFamilies) * kPi / 6.0;
  s.orientation = base;
  if (s.family != ShapeFamily::Circle) s.orientation += uniform(-kPi / 18.0, kPi / 18.0);

  const double extent = std::min(params.height, params.width);
  s.size = uniform(0.13, 0.2) * extent;
  const double radius = s.size * std::sqrt(2.0);  // bounding radius for any orientation

  double speed = uniform(params.min_speed, params.max_speed);
  const double heading = uniform(0.0, 2.0 * kPi);
  const double T = params.timesteps;
  // Keep the whole trajectory inside the frame.
  const double room = std::max(0.0, extent - 2.0 * radius - 2.0);
  if (speed * T > room) speed = room / T;
  s.vx = speed * std::cos(heading);
  s.vy = speed * std::sin(heading);
  auto place = [&](double v, int len) {
    const double lo = radius + 1.0 - std::min(0.0, v * T);
    const double hi = len - radius - 1.0 - std::max(0.0, v * T);
    return hi > lo ? uniform(lo, hi) : 0.5 * (lo + hi);
  };
  s.cx = place(s.vx, params.width);
  s.cy = place(s.vy, params.height);

  hsv_to_rgb(unit(rng), uniform(0.3, 1.0), uniform(0.6, 1.0), s.fg);
  hsv_to_rgb(unit(rng), uniform(0.0, 0.6), uniform(0.0, 0.25), s.bg);
  return s;
}

RgbImage render_rgb(const Scene& scene, int height, int width, double t, int supersample) {
  RgbImage img{height, width, std::vector<float>(static_cast<std::size_t>(height) * width * 3)};
  const int ss = std::max(1, supersample);
  const double inv = 1.0 / (ss * ss);
  for (int y = 0; y < height; ++y) {
    for (int x = 0; x < width; ++x) {
      int hits = 0;
      for (int sy = 0; sy < ss; ++sy)
        for (int sx = 0; sx < ss; ++sx)
          hits += inside(scene, x + (sx + 0.5) / ss, y + (sy + 0.5) / ss, t) ? 1 : 0;
      const double cov = hits * inv;
      float* px = &img.rgb[(static_cast<std::size_t>(y) * width + x) * 3];
      for (int c = 0; c < 3; ++c) px[c] = static_cast<float>(scene.bg[c] + cov * (scene.fg[c] - scene.bg[c]));
    }
  }
  return img;
}

std::vector<float> render_intensity(const Scene& scene, int height, int width, double t, int supersample) {
  const RgbImage img = render_rgb(scene, height, width, t, supersample);
  std::vector<float> v(static_cast<std::size_t>(height) * width);
  for (std::size_t i = 0; i < v.size(); ++i) {
    v[i] = std::max({img.rgb[3 * i], img.rgb[3 * i + 1], img.rgb[3 * i + 2]});
  }
  return v;
}

FrameSeq simulate_events(const Scene& scene, const GeneratorParams& params, int label) {
  const int H = params.height, W = params.width, T = params.timesteps;
  FrameSeq seq = FrameSeq::zeros({T, 2, H, W}, Modality::Event, label);
  const std::size_t plane = static_cast<std::size_t>(H) * W;
  std::vector<float> prev = render_intensity(scene, H, W, 0.0, params.supersample);
  for (int t = 1; t <= T; ++t) {
    std::vector<float> cur = render_intensity(scene, H, W, t, params.supersample);
    auto frame = seq.frame(t - 1);
    for (std::size_t i = 0; i < plane; ++i) {
      const double d = static_cast<double>(cur[i]) - prev[i];
      if (d > params.contrast_threshold) frame[i] = 1.0f;
      else if (d < -params.contrast_threshold) frame[plane + i] = 1.0f;
    }
    prev = std::move(cur);
  }
  return seq;
}

FrameSeq encode_static(const RgbImage& image, int timesteps, int label) {
  if (timesteps < 1) throw Error(ErrorCategory::Domain, "encode_static: timesteps must be >= 1");
  const std::size_t plane = static_cast<std::size_t>(image.height) * image.width;
  if (image.rgb.size() != 3 * plane || plane == 0) {
    throw Error(ErrorCategory::Data, "encode_static: RGB buffer does not match H x W x 3");
  }
  FrameSeq seq = FrameSeq::zeros({timesteps, 2, image.height, image.width}, Modality::Static, label);
  std::size_t clamped = 0;
  std::vector<float> value(plane);
  for (std::size_t i = 0; i < plane; ++i) {
    float m = 0.0f;
    for (int c = 0; c < 3; ++c) {
      float x = image.rgb[3 * i + c];
      if (!(x >= 0.0f && x <= 1.0f)) {
        ++clamped;
        x = std::isnan(x) ? 0.0f : std::clamp(x, 0.0f, 1.0f);
      }
      m = std::max(m, x);
    }
    value[i] = m;  // HSV value channel
  }
  if (clamped > 0) {
    std::cerr << "warning: encode_static clamped " << clamped << " RGB values into [0,1]\n";
  }
  for (int t = 0; t < timesteps; ++t) {
    auto frame = seq.frame(t);
    std::copy(value.begin(), value.end(), frame.begin());
    std::copy(value.begin(), value.end(), frame.begin() + static_cast<std::ptrdiff_t>(plane));
  }
  return seq;
}

double event_density(const FrameSeq& seq) {
  if (seq.data.empty()) return 0.0;
  const auto nz = std::count_if(seq.data.begin(), seq.data.end(), [](float v) { return v != 0.0f; });
  return static_cast<double>(nz) / static_cast<double>(seq.data.size());
}

std::pair<FrameSeq, FrameSeq> generate_pair(const GeneratorParams& params, int label, int index) {
  params.validate();
  if (label < 0 || label >= params.classes) throw Error(ErrorCategory::Domain, "label out of class range");
  const std::uint64_t key = static_cast<std::uint64_t>(label) * static_cast<std::uint64_t>(params.per_class) +
                            static_cast<std::uint64_t>(index);
  const Scene scene = random_scene(params, label, derive_seed(params.seed, streams::kScene, key));
  FrameSeq stat = encode_static(render_rgb(scene, params.height, params.width, 0.0, params.supersample),
                                params.timesteps, label);
  FrameSeq event = simulate_events(scene, params, label);
  const double density = event_density(event);
  if (density > params.max_event_density) {
    std::ostringstream msg;
    msg << "sample " << sample_id(label, index) << " has event density " << density << " above the bound "
        << params.max_event_density;
    throw Error(ErrorCategory::Data, msg.str());
  }
  return {std::move(stat), std::move(event)};
}

DatasetManifest gen_paired_dataset(const GeneratorParams& params, const std::filesystem::path& out_dir) {
  params.validate();
  DatasetManifest manifest;
  manifest.generator = params;
  manifest.root = out_dir;
  for (int k = 0; k < params.classes; ++k) manifest.class_names.push_back(class_name(k));
  const int n_test = test_count(params);
  std::filesystem::create_directories(out_dir / "static");
  std::filesystem::create_directories(out_dir / "event");
  for (int k = 0; k < params.classes; ++k) {
    for (int i = 0; i < params.per_class; ++i) {
      auto [stat, event] = generate_pair(params, k, i);
      SampleEntry e;
      e.id = sample_id(k, i);
      e.label = k;
      e.static_path = "static/" + e.id + ".tmkt";
      e.event_path = "event/" + e.id + ".tmkt";
      e.shape = stat.shape;
      e.split = i >= params.per_class - n_test ? "test" : "train";
      io::save_sequence(out_dir / e.static_path, stat);
      io::save_sequence(out_dir / e.event_path, event);
      manifest.samples.push_back(std::move(e));
    }
  }
  save_manifest(manifest, out_dir / kManifestName);
  return manifest;
}

void save_manifest(const DatasetManifest& manifest, const std::filesystem::path& path) {
  json samples = json::array();
  for (const auto& s : manifest.samples) {
    samples.push_back({{"id", s.id},
                       {"label", s.label},
                       {"static", s.static_path},
                       {"event", s.event_path},
                       {"shape", {s.shape.timesteps, s.shape.channels, s.shape.height, s.shape.width}},
                       {"split", s.split}});
  }
  const json j = {{"version", manifest.version},
                  {"class_names", manifest.class_names},
                  {"generator", params_to_json(manifest.generator)},
                  {"samples", samples}};
  const std::string text = j.dump(1);
  io::write_file(path, std::span(reinterpret_cast<const unsigned char*>(text.data()), text.size()));
}

DatasetManifest load_manifest(const std::filesystem::path& path) {
  const auto file = std::filesystem::is_directory(path) ? path / kManifestName : path;
  std::ifstream in(file);
  if (!in) throw Error(ErrorCategory::Data, "cannot open dataset manifest '" + file.string() + "'");
  DatasetManifest m;
  try {
    const json j = json::parse(in);
    m.version = j.at("version").get<int>();
    if (m.version != 1) {
      throw Error(ErrorCategory::Format, "unsupported manifest version " + std::to_string(m.version));
    }
    m.class_names = j.at("class_names").get<std::vector<std::string>>();
    if (j.contains("generator")) m.generator = params_from_json(j.at("generator"));
    for (const auto& s : j.at("samples")) {
      SampleEntry e;
      e.id = s.at("id").get<std::string>();
      e.label = s.at("label").get<int>();
      e.static_path = s.at("static").get<std::string>();
      e.event_path = s.at("event").get<std::string>();
      const auto dims = s.at("shape").get<std::vector<int>>();
      if (dims.size() != 4) throw Error(ErrorCategory::Format, "sample " + e.id + ": shape must have 4 dims");
      e.shape = {dims[0], dims[1], dims[2], dims[3]};
      e.split = s.value("split", std::string("train"));
      if (e.label < 0 || e.label >= static_cast<int>(m.class_names.size())) {
        throw Error(ErrorCategory::Data, "sample " + e.id + ": label out of class range");
      }
      m.samples.push_back(std::move(e));
    }
  } catch (const json::exception& e) {
    throw Error(ErrorCategory::Format, "malformed manifest '" + file.string() + "': " + e.what());
  }
  m.root = file.parent_path();
  return m;
}

std::vector<PairedSample> load_pairs(const DatasetManifest& manifest, const std::string& split) {
  std::vector<PairedSample> out;
  for (const auto& e : manifest.samples) {
    if (!split.empty() && e.split != split) continue;
    PairedSample p;
    p.id = e.id;
    p.static_seq = io::load_sequence(manifest.root / e.static_path, Modality::Static, e.label);
    p.event_seq = io::load_sequence(manifest.root / e.event_path, Modality::Event, e.label);
    if (!(p.static_seq.shape == e.shape) || !(p.event_seq.shape == e.shape)) {
      throw Error(ErrorCategory::Data, "pairing error: sample " + e.id + " files do not match manifest shape " +
                                           e.shape.to_string());
    }
    out.push_back(std::move(p));
  }
  return out;
}

}  // namespace tmkt::data
