#include "pointkan/config.hpp"

#include <fstream>
#include <sstream>

namespace pointkan {

namespace {

std::string trim(const std::string& s) {
  const auto first = s.find_first_not_of(" \t\r\n");
  if (first == std::string::npos) return "";
  const auto last = s.find_last_not_of(" \t\r\n");
  return s.substr(first, last - first + 1);
}

std::size_t parse_count(const std::string& key, const std::string& value) {
  std::size_t pos = 0;
  unsigned long long v = 0;
  try {
    v = std::stoull(value, &pos);
  } catch (const std::exception&) {
    throw std::invalid_argument("config: bad value '" + value + "' for key '" + key + "'");
  }
  check_arg(pos == value.size(), "config: bad value '" + value + "' for key '" + key + "'");
  return static_cast<std::size_t>(v);
}

bool parse_bool(const std::string& key, const std::string& value) {
  if (value == "true" || value == "1") return true;
  if (value == "false" || value == "0") return false;
  throw std::invalid_argument("config: bad boolean '" + value + "' for key '" + key + "'");
}

}  // namespace

ModelConfig parse_config_text(const std::string& text) {
  ModelConfig cfg;
  std::istringstream in(text);
  std::string line;
  std::size_t line_no = 0;
  while (std::getline(in, line)) {
    ++line_no;
    if (auto pos = line.find('#'); pos != std::string::npos) line.erase(pos);
    line = trim(line);
    if (line.empty()) continue;
    const auto eq = line.find('=');
    check_arg(eq != std::string::npos,
              "config: line " + std::to_string(line_no) + " is not 'key = value'");
    const std::string key = trim(line.substr(0, eq));
    const std::string value = trim(line.substr(eq + 1));
    check_arg(!key.empty() && !value.empty(),
              "config: line " + std::to_string(line_no) + " is not 'key = value'");

    if (key == "points") cfg.points = parse_count(key, value);
    else if (key == "embed_dim") cfg.embed_dim = parse_count(key, value);
    else if (key == "classes") cfg.classes = parse_count(key, value);
    else if (key == "backend") cfg.backend = backend_from_name(value);
    else if (key == "grid_size") cfg.grid_size = parse_count(key, value);
    else if (key == "spline_order") cfg.spline_order = parse_count(key, value);
    else if (key == "rational_degree_num") cfg.rational_degree_num = parse_count(key, value);
    else if (key == "rational_degree_den") cfg.rational_degree_den = parse_count(key, value);
    else if (key == "rational_groups") cfg.rational_groups = parse_count(key, value);
    else if (key == "kan_depth") cfg.kan_depth = parse_count(key, value);
    else if (key == "kan_hidden_num") cfg.kan_hidden_num = parse_count(key, value);
    else if (key == "kan_hidden_den") cfg.kan_hidden_den = parse_count(key, value);
    else if (key == "dwconv_kernel") cfg.dwconv_kernel = parse_count(key, value);
    else if (key == "resp_blocks") cfg.resp_blocks = parse_count(key, value);
    else if (key == "gam_affine") cfg.gam_affine = parse_bool(key, value);
    else if (key == "s_pool") cfg.s_pool = parse_bool(key, value);
    else if (key == "lfp") cfg.lfp = parse_bool(key, value);
    else if (key == "gfp") cfg.gfp = parse_bool(key, value);
    else if (key == "dwconv") cfg.dwconv = parse_bool(key, value);
    else if (key == "stages") cfg.num_stages = parse_count(key, value);
    else if (key == "stage1_centers") cfg.stage_centers[0] = parse_count(key, value);
    else if (key == "stage2_centers") cfg.stage_centers[1] = parse_count(key, value);
    else if (key == "stage3_centers") cfg.stage_centers[2] = parse_count(key, value);
    else if (key == "stage4_centers") cfg.stage_centers[3] = parse_count(key, value);
    else if (key == "stage1_neighbors") cfg.stage_neighbors[0] = parse_count(key, value);
    else if (key == "stage2_neighbors") cfg.stage_neighbors[1] = parse_count(key, value);
    else if (key == "stage3_neighbors") cfg.stage_neighbors[2] = parse_count(key, value);
    else if (key == "stage4_neighbors") cfg.stage_neighbors[3] = parse_count(key, value);
    else throw std::invalid_argument("config: unknown key '" + key + "'");
  }
  cfg.validate();
  return cfg;
}

ModelConfig load_config(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw std::runtime_error("cannot open config " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return parse_config_text(ss.str());
}

std::string config_to_text(const ModelConfig& cfg) {
  std::ostringstream out;
  out << "points = " << cfg.points << "\n";
  out << "embed_dim = " << cfg.embed_dim << "\n";
  out << "classes = " << cfg.classes << "\n";
  out << "backend = " << backend_name(cfg.backend) << "\n";
  out << "grid_size = " << cfg.grid_size << "\n";
  out << "spline_order = " << cfg.spline_order << "\n";
  out << "rational_degree_num = " << cfg.rational_degree_num << "\n";
  out << "rational_degree_den = " << cfg.rational_degree_den << "\n";
  out << "rational_groups = " << cfg.rational_groups << "\n";
  out << "kan_depth = " << cfg.kan_depth << "\n";
  out << "kan_hidden_num = " << cfg.kan_hidden_num << "\n";
  out << "kan_hidden_den = " << cfg.kan_hidden_den << "\n";
  out << "dwconv_kernel = " << cfg.dwconv_kernel << "\n";
  out << "resp_blocks = " << cfg.resp_blocks << "\n";
  out << "gam_affine = " << (cfg.gam_affine ? "true" : "false") << "\n";
  out << "s_pool = " << (cfg.s_pool ? "true" : "false") << "\n";
  out << "lfp = " << (cfg.lfp ? "true" : "false") << "\n";
  out << "gfp = " << (cfg.gfp ? "true" : "false") << "\n";
  out << "dwconv = " << (cfg.dwconv ? "true" : "false") << "\n";
  out << "stages = " << cfg.num_stages << "\n";
  for (std::size_t s = 0; s < 4; ++s) {
    out << "stage" << (s + 1) << "_centers = " << cfg.stage_centers[s] << "\n";
    out << "stage" << (s + 1) << "_neighbors = " << cfg.stage_neighbors[s] << "\n";
  }
  return out.str();
}

}  // namespace pointkan
