#include "pointkan/dataset.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <random>
#include <sstream>

#include "pointkan/geometry.hpp"

namespace pointkan {

namespace fs = std::filesystem;

namespace {

std::string strip(const std::string& line) {
  std::string s = line;
  if (auto pos = s.find('#'); pos != std::string::npos) s.erase(pos);
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

void atomic_write(const fs::path& path, const std::string& content) {
  fs::path tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw std::runtime_error("cannot open " + tmp.string() + " for writing");
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw std::runtime_error("write failed for " + tmp.string());
  }
  fs::rename(tmp, path);
}

}  // namespace

PointCloud load_points_file(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open points file " + path.string());
  PointCloud cloud;
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip(line);
    if (body.empty()) continue;
    std::istringstream ss(body);
    double x, y, z;
    std::string extra;
    if (!(ss >> x >> y >> z) || (ss >> extra))
      throw std::runtime_error(path.string() + ": parse error at line " +
                               std::to_string(line_no) + " (expected 'x y z')");
    cloud.points.push_back({x, y, z});
  }
  check_arg(!cloud.points.empty(), path.string() + ": no points");
  return cloud;
}

void save_points_file(const fs::path& path, const PointCloud& cloud) {
  std::string content;
  content.reserve(cloud.size() * 60);
  char buf[96];
  for (const auto& p : cloud.points) {
    std::snprintf(buf, sizeof(buf), "%.17g %.17g %.17g\n", p[0], p[1], p[2]);
    content += buf;
  }
  atomic_write(path, content);
}

DatasetManifest load_manifest(const fs::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open manifest " + path.string());
  DatasetManifest m;
  std::string line;
  std::size_t line_no = 0;
  bool have_classes = false;
  while (std::getline(in, line)) {
    ++line_no;
    const std::string body = strip(line);
    if (body.empty()) continue;
    if (!have_classes) {
      if (body.rfind("classes:", 0) != 0)
        throw std::runtime_error(path.string() + ": line " + std::to_string(line_no) +
                                 ": expected 'classes: name0,name1,...'");
      std::string names = body.substr(8);
      std::istringstream ss(names);
      std::string name;
      while (std::getline(ss, name, ',')) {
        name = strip(name);
        if (!name.empty()) m.class_names.push_back(name);
      }
      check_arg(!m.class_names.empty(), path.string() + ": empty class list");
      have_classes = true;
      continue;
    }
    std::istringstream ss(body);
    ManifestEntry e;
    if (!(ss >> e.path >> e.label))
      throw std::runtime_error(path.string() + ": parse error at line " +
                               std::to_string(line_no));
    check_arg(e.label >= 0 && static_cast<std::size_t>(e.label) < m.class_names.size(),
              path.string() + ": label out of range at line " + std::to_string(line_no));
    m.entries.push_back(std::move(e));
  }
  check_arg(have_classes, path.string() + ": missing classes line");
  return m;
}

void save_manifest(const fs::path& path, const DatasetManifest& manifest) {
  std::string content = "classes: ";
  for (std::size_t i = 0; i < manifest.class_names.size(); ++i) {
    if (i) content += ",";
    content += manifest.class_names[i];
  }
  content += "\n";
  for (const auto& e : manifest.entries)
    content += e.path + " " + std::to_string(e.label) + "\n";
  atomic_write(path, content);
}

Dataset load_dataset(const fs::path& manifest_path) {
  DatasetManifest manifest = load_manifest(manifest_path);
  const fs::path base = manifest_path.parent_path();
  Dataset data;
  data.class_names = manifest.class_names;
  for (const auto& e : manifest.entries) {
    PointCloud cloud = load_points_file(base / e.path);
    cloud.label = e.label;
    data.samples.push_back(std::move(cloud));
  }
  return data;
}

namespace {

std::array<double, 3> sample_sphere(std::mt19937_64& rng) {
  std::uniform_real_distribution<double> uz(-1.0, 1.0);
  std::uniform_real_distribution<double> uphi(0.0, 2.0 * M_PI);
  const double z = uz(rng);
  const double phi = uphi(rng);
  const double r = std::sqrt(std::max(0.0, 1.0 - z * z));
  return {r * std::cos(phi), r * std::sin(phi), z};
}

std::array<double, 3> sample_cube(std::mt19937_64& rng) {
  std::uniform_int_distribution<int> uface(0, 5);
  std::uniform_real_distribution<double> u(-1.0, 1.0);
  const int face = uface(rng);
  const double a = u(rng), b = u(rng);
  switch (face) {
    case 0: return {1.0, a, b};
    case 1: return {-1.0, a, b};
    case 2: return {a, 1.0, b};
    case 3: return {a, -1.0, b};
    case 4: return {a, b, 1.0};
    default: return {a, b, -1.0};
  }
}

std::array<double, 3> sample_cylinder(std::mt19937_64& rng) {
  // Unit radius, height 2: lateral area 4*pi, caps pi each.
  std::uniform_real_distribution<double> u01(0.0, 1.0);
  std::uniform_real_distribution<double> uphi(0.0, 2.0 * M_PI);
  const double pick = u01(rng);
  const double phi = uphi(rng);
  if (pick < 2.0 / 3.0) {
    std::uniform_real_distribution<double> uz(-1.0, 1.0);
    return {std::cos(phi), std::sin(phi), uz(rng)};
  }
  const double r = std::sqrt(u01(rng));
  const double z = pick < 5.0 / 6.0 ? 1.0 : -1.0;
  return {r * std::cos(phi), r * std::sin(phi), z};
}

}  // namespace

DatasetManifest synth_dataset(const fs::path& out_dir, const SynthOptions& opts) {
  check_arg(opts.points >= 8, "synth_dataset: need at least 8 points");
  check_arg(opts.noise >= 0.0, "synth_dataset: noise must be nonnegative");
  check_arg(opts.per_class >= 1, "synth_dataset: per_class must be positive");
  check_arg(!opts.shapes.empty(), "synth_dataset: no shapes");
  for (const auto& s : opts.shapes)
    check_arg(s == "sphere" || s == "cube" || s == "cylinder",
              "synth_dataset: unknown shape '" + s + "'");

  fs::create_directories(out_dir);
  std::mt19937_64 rng(opts.seed);
  std::normal_distribution<double> jitter(0.0, 1.0);
  std::uniform_real_distribution<double> uangle(0.0, 2.0 * M_PI);

  DatasetManifest manifest;
  manifest.class_names = opts.shapes;
  for (std::size_t ci = 0; ci < opts.shapes.size(); ++ci) {
    const std::string& shape = opts.shapes[ci];
    for (std::size_t s = 0; s < opts.per_class; ++s) {
      PointCloud cloud;
      cloud.points.resize(opts.points);
      const double theta = uangle(rng);  // rotation about the vertical axis
      const double ct = std::cos(theta), st = std::sin(theta);
      for (auto& p : cloud.points) {
        std::array<double, 3> v;
        if (shape == "sphere")
          v = sample_sphere(rng);
        else if (shape == "cube")
          v = sample_cube(rng);
        else
          v = sample_cylinder(rng);
        if (opts.noise > 0.0)
          for (double& c : v) c += opts.noise * jitter(rng);
        p = {v[0] * ct - v[1] * st, v[0] * st + v[1] * ct, v[2]};
      }
      cloud = centroid_normalize(cloud);
      const std::string name = shape + "_" + std::to_string(s) + ".xyz";
      save_points_file(out_dir / name, cloud);
      manifest.entries.push_back({name, static_cast<int>(ci)});
    }
  }
  save_manifest(out_dir / "manifest.txt", manifest);
  return manifest;
}

}  // namespace pointkan
