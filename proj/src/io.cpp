#include "msgp/io.hpp"

#include <cinttypes>
#include <cstdio>
#include <cstdlib>
#include <cstring>
#include <ctime>
#include <filesystem>
#include <fstream>

namespace msgp::io {
namespace {

constexpr char kGridMagic[8] = {'M', 'S', 'G', 'R', 'D', '0', '0', '1'};

void put_u64(std::string& buf, std::uint64_t v) {
  for (int i = 0; i < 8; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_i32(std::string& buf, std::int32_t v) {
  for (int i = 0; i < 4; ++i) buf.push_back(static_cast<char>((v >> (8 * i)) & 0xff));
}
void put_f64(std::string& buf, double v) {
  std::uint64_t bits;
  std::memcpy(&bits, &v, 8);
  put_u64(buf, bits);
}

struct Reader {
  const std::string& s;
  std::size_t pos = 0;
  std::uint64_t u64() {
    if (pos + 8 > s.size()) throw config_error("grid file truncated");
    std::uint64_t v = 0;
    for (int i = 0; i < 8; ++i) v |= static_cast<std::uint64_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 8;
    return v;
  }
  std::int32_t i32() {
    if (pos + 4 > s.size()) throw config_error("grid file truncated");
    std::int32_t v = 0;
    for (int i = 0; i < 4; ++i) v |= static_cast<std::int32_t>(static_cast<unsigned char>(s[pos + i])) << (8 * i);
    pos += 4;
    return v;
  }
  double f64() {
    const std::uint64_t bits = u64();
    double v;
    std::memcpy(&v, &bits, 8);
    return v;
  }
};

Eigen::VectorXd vector_from_json(const json& a) {
  Eigen::VectorXd v(a.size());
  for (std::size_t i = 0; i < a.size(); ++i) v(i) = a[i].get<double>();
  return v;
}

json vector_to_json(const Eigen::VectorXd& v) {
  json a = json::array();
  for (Eigen::Index i = 0; i < v.size(); ++i) a.push_back(v(i));
  return a;
}

} // namespace

std::string fmt17(double v) {
  char buf[40];
  std::snprintf(buf, sizeof(buf), "%.17g", v);
  return buf;
}

std::string timestamp() {
  std::time_t t;
  if (const char* epoch = std::getenv("SOURCE_DATE_EPOCH")) {
    t = static_cast<std::time_t>(std::strtoll(epoch, nullptr, 10));
  } else {
    t = std::time(nullptr);
  }
  std::tm tm{};
  gmtime_r(&t, &tm);
  char buf[32];
  std::strftime(buf, sizeof(buf), "%Y-%m-%dT%H:%M:%SZ", &tm);
  return buf;
}

std::string config_hash(const json& config) {
  const std::string dump = config.dump();
  std::uint64_t h = 0xcbf29ce484222325ull;
  for (unsigned char c : dump) {
    h ^= c;
    h *= 0x100000001b3ull;
  }
  char buf[20];
  std::snprintf(buf, sizeof(buf), "%016" PRIx64, h);
  return buf;
}

void write_text(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary);
    if (!out) throw config_error("cannot open for writing: " + tmp);
    out.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!out) throw config_error("short write: " + tmp);
  }
  std::filesystem::rename(tmp, path);
}

json read_json_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open: " + path);
  json j;
  try {
    in >> j;
  } catch (const json::parse_error& e) {
    throw config_error(path + ": " + e.what());
  }
  return j;
}

void write_json_file(const std::string& path, const json& j) { write_text(path, j.dump(2) + "\n"); }

void write_grid_binary(const std::string& path, const FieldRealization& f) {
  std::string buf;
  buf.reserve(64 + 8 * static_cast<std::size_t>(f.values.size()));
  buf.append(kGridMagic, 8);
  put_f64(buf, f.grid.origin.x);
  put_f64(buf, f.grid.origin.y);
  put_f64(buf, f.grid.Lx);
  put_f64(buf, f.grid.Ly);
  put_i32(buf, f.grid.n1);
  put_i32(buf, f.grid.n2);
  put_i32(buf, static_cast<std::int32_t>(f.scale));
  put_i32(buf, 0);
  put_u64(buf, f.seed);
  for (Eigen::Index i = 0; i < f.values.size(); ++i) put_f64(buf, f.values(i));
  write_text(path, buf);
}

FieldRealization read_grid_binary(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw config_error("cannot open: " + path);
  std::string s((std::istreambuf_iterator<char>(in)), std::istreambuf_iterator<char>());
  if (s.size() < 8 || std::memcmp(s.data(), kGridMagic, 8) != 0)
    throw config_error(path + ": not a msgp grid file");
  Reader r{s, 8};
  FieldRealization f;
  const double ox = r.f64(), oy = r.f64(), Lx = r.f64(), Ly = r.f64();
  const int n1 = r.i32(), n2 = r.i32();
  const int scale = r.i32();
  r.i32();  // padding
  f.seed = r.u64();
  f.grid = StructuredGrid::make({ox, oy}, Lx, Ly, n1, n2);
  f.scale = scale == 0 ? Scale::Coarse : Scale::Fine;
  f.values.resize(f.grid.size());
  for (int i = 0; i < f.grid.size(); ++i) f.values(i) = r.f64();
  return f;
}

void write_grid_csv(const std::string& path, const FieldRealization& f) {
  std::string out = "x,y,value\n";
  for (int j = 0; j < f.grid.n2; ++j)
    for (int i = 0; i < f.grid.n1; ++i) {
      const Point c = f.grid.centroid(i, j);
      out += fmt17(c.x);
      out += ',';
      out += fmt17(c.y);
      out += ',';
      out += fmt17(f.values(f.grid.index(i, j)));
      out += '\n';
    }
  write_text(path, out);
}

json dataset_to_json(const MultiscaleDataset& d, const json& meta) {
  json j;
  j["schema"] = "msgp-dataset-v1";
  auto block = [](const Eigen::MatrixX2d& X, const Eigen::VectorXd& y) {
    json b;
    json xs = json::array(), ys = json::array(), vs = json::array();
    for (Eigen::Index i = 0; i < X.rows(); ++i) {
      xs.push_back(X(i, 0));
      ys.push_back(X(i, 1));
      vs.push_back(y(i));
    }
    b["x"] = std::move(xs);
    b["y"] = std::move(ys);
    b["value"] = std::move(vs);
    return b;
  };
  j["coarse"] = block(d.X_c, d.y_c);
  j["fine"] = block(d.X_f, d.y_f);
  j["noise_c"] = d.noise_c;
  j["noise_f"] = d.noise_f;
  if (!meta.empty()) j["meta"] = meta;
  return j;
}

MultiscaleDataset dataset_from_json(const json& j) {
  if (!j.contains("schema") || j["schema"] != "msgp-dataset-v1")
    throw config_error("dataset: missing or unknown schema (want msgp-dataset-v1)");
  MultiscaleDataset d;
  auto block = [&](const char* key, Eigen::MatrixX2d& X, Eigen::VectorXd& y) {
    const json& b = j.at(key);
    const auto& xs = b.at("x");
    const auto& ys = b.at("y");
    const auto& vs = b.at("value");
    if (xs.size() != ys.size() || xs.size() != vs.size())
      throw config_error(std::string("dataset: ragged arrays in block ") + key);
    X.resize(static_cast<Eigen::Index>(xs.size()), 2);
    y.resize(static_cast<Eigen::Index>(vs.size()));
    for (std::size_t i = 0; i < xs.size(); ++i) {
      X(static_cast<Eigen::Index>(i), 0) = xs[i].get<double>();
      X(static_cast<Eigen::Index>(i), 1) = ys[i].get<double>();
      y(static_cast<Eigen::Index>(i)) = vs[i].get<double>();
    }
  };
  block("coarse", d.X_c, d.y_c);
  block("fine", d.X_f, d.y_f);
  d.noise_c = j.value("noise_c", 0.0);
  d.noise_f = j.value("noise_f", 0.0);
  return d;
}

json params_to_json(const BivariateMaternParams& p) {
  json j;
  j["lambda_c"] = p.lambda_c;
  j["lambda_f"] = p.lambda_f;
  j["lambda_cf"] = p.lambda_cf;
  j["nu_c"] = p.nu_c;
  j["nu_f"] = p.nu_f;
  j["nu_cf"] = p.nu_cf();  // derived, for the record
  j["sigma_c"] = p.sigma_c;
  j["sigma_f"] = p.sigma_f;
  j["rho"] = p.rho;
  j["sigma_nc"] = p.sigma_nc;
  j["sigma_nf"] = p.sigma_nf;
  return j;
}

BivariateMaternParams params_from_json(const json& j) {
  BivariateMaternParams p;
  p.lambda_c = j.at("lambda_c").get<double>();
  p.lambda_f = j.at("lambda_f").get<double>();
  p.lambda_cf = j.at("lambda_cf").get<double>();
  p.nu_c = j.at("nu_c").get<double>();
  p.nu_f = j.at("nu_f").get<double>();
  p.sigma_c = j.at("sigma_c").get<double>();
  p.sigma_f = j.at("sigma_f").get<double>();
  p.rho = j.at("rho").get<double>();
  p.sigma_nc = j.value("sigma_nc", 0.0);
  p.sigma_nf = j.value("sigma_nf", 0.0);
  p.check_fields();
  return p;
}

BivariateMaternParams params_from_file(const std::string& path) {
  const json j = read_json_file(path);
  return params_from_json(j.contains("params") ? j["params"] : j);
}

json fit_report_to_json(const FitResult& r, const json& options_echo) {
  json j;
  j["schema"] = "msgp-fit-v1";
  j["model"] = "bimatern";
  j["criterion"] = to_string(r.criterion);
  j["params"] = params_to_json(r.theta);
  j["objective_value"] = r.objective_value;
  j["log_likelihood"] = -r.objective_value;
  j["converged"] = r.converged;
  j["n_evals"] = r.n_evals;
  j["iterations"] = r.iterations;
  j["start_index"] = r.start_index;
  j["jitter_events"] = r.jitter_events;
  j["active_constraints"] = r.active_constraints;
  const ValidityReport rep = check_validity(r.theta, 1e-9);
  j["feasibility"] = {{"feasible", rep.feasible},
                      {"margin_a", rep.margin_a},
                      {"margin_rho", rep.margin_rho},
                      {"rho_bound", rho_bound(r.theta)}};
  // Table-shaped summary row (column order of the published tables)
  j["table_row"] = {{"lambda_f", r.theta.lambda_f}, {"sigma_f", r.theta.sigma_f},
                    {"nu_f", r.theta.nu_f},         {"lambda_c", r.theta.lambda_c},
                    {"sigma_c", r.theta.sigma_c},   {"nu_c", r.theta.nu_c},
                    {"lambda_cf", r.theta.lambda_cf}, {"rho", r.theta.rho},
                    {"sigma_nf", r.theta.sigma_nf}, {"sigma_nc", r.theta.sigma_nc}};
  j["options"] = options_echo;
  return j;
}

void write_variogram_csv(const std::string& path, const std::vector<VariogramCurve>& curves) {
  std::string out = "kind,source,lag,value,count\n";
  for (const auto& c : curves) {
    for (Eigen::Index b = 0; b < c.bins.lag.size(); ++b) {
      out += c.kind;
      out += ',';
      out += c.source;
      out += ',';
      out += fmt17(c.bins.lag(b));
      out += ',';
      if (c.bins.count(b) > 0 || c.source == "model") out += fmt17(c.bins.value(b));
      out += ',';
      out += std::to_string(c.bins.count(b));
      out += '\n';
    }
  }
  write_text(path, out);
}

void write_manifest(const std::string& path, const Manifest& m) {
  json j;
  j["schema"] = "msgp-manifest-v1";
  j["command"] = m.command;
  j["tool_version"] = kToolVersion;
  j["created"] = timestamp();
  j["seed"] = m.seed;
  j["config"] = m.config;
  j["config_hash"] = config_hash(m.config);
  j["outputs"] = m.outputs;
  j["stages"] = m.stages;
  write_json_file(path, j);
}

} // namespace msgp::io
