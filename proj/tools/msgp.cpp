// msgp: multiscale Gaussian-process regression toolkit, batch front end.
//
// Subcommands: generate | fit | predict | variogram | simulate | darcy.
// Every command is a pure function of (config, seed): reruns write
// byte-identical outputs (set SOURCE_DATE_EPOCH to pin manifest timestamps).
// Randomness comes from the Philox4x32-10 counter generator with
// per-realization substreams, so results are independent of --threads.

#include <omp.h>

#include <cstdio>
#include <filesystem>
#include <optional>
#include <set>
#include <string>
#include <vector>

#include <CLI11.hpp>

#include "msgp/covariance.hpp"
#include "msgp/darcy.hpp"
#include "msgp/fields.hpp"
#include "msgp/fit.hpp"
#include "msgp/gp.hpp"
#include "msgp/io.hpp"
#include "msgp/rng.hpp"

namespace fs = std::filesystem;
using namespace msgp;
using json = io::json;

namespace {

constexpr std::uint64_t kStreamHeadObs = (std::uint64_t{1} << 62) + 2;

// ---------------------------------------------------------------------------
// configs & presets

json preset_config(const std::string& name) {
  json c;
  c["schema"] = "msgp-config-v1";
  c["seed"] = 20240601;
  c["fit"] = {{"n_starts", 5}, {"max_evals", 2000}, {"tol", 1e-6}, {"blockavg_quad_order", 6}};
  c["variogram"] = {{"n_bins", 20}, {"max_lag_frac", 0.5}};
  c["simulate"] = {{"n_real", 4}, {"scale", "fine"}, {"quad", {{"n1", 64}, {"n2", 32}}}};
  c["darcy"] = {{"K_G", 1.0}, {"h_L", 1.0}, {"h_R", 0.0},   {"n_real", 500},
                {"n_head_obs", 20}, {"head_noise_frac", 0.05}};
  if (name == "test1" || name == "test2") {
    c["domain"] = {{"Lx", 2.0}, {"Ly", 1.0}};
    c["grid"] = {{"n1", 256}, {"n2", 128}};
    c["reference"] = {{"sigma_f", 1.0},
                      {"lambda_f", name == "test1" ? 0.05 : 0.10},
                      {"nu_f", 0.5},
                      {"m", name == "test1" ? 8 : 16},
                      {"n_fine", name == "test1" ? 50 : 40},
                      {"n_coarse", name == "test1" ? 150 : 120},
                      {"noise_sigma", 0.05},
                      {"sim_quad", {{"n1", 128}, {"n2", 64}}}};
    c["predict"] = {{"quad", {{"n1", 64}, {"n2", 32}}}};
  } else if (name == "test3") {
    c["domain"] = {{"Lx", 1.0}, {"Ly", 1.0}};
    c["grid"] = {{"n1", 64}, {"n2", 64}};
    c["reference"] = {{"sigma_f", 1.0}, {"lambda_f", 0.05}, {"nu_f", 0.5},  {"m", 8},
                      {"n_fine", 150},  {"n_coarse", 50},   {"noise_sigma", 0.05},
                      {"sim_quad", {{"n1", 64}, {"n2", 64}}}};
    c["predict"] = {{"quad", {{"n1", 32}, {"n2", 32}}}};
  } else if (name == "darcy1") {
    c["domain"] = {{"Lx", 2.0}, {"Ly", 1.0}};
    c["grid"] = {{"n1", 128}, {"n2", 64}};
    c["reference"] = {{"sigma_f", 1.0}, {"lambda_f", 0.05}, {"nu_f", 0.5},  {"m", 4},
                      {"n_fine", 50},   {"n_coarse", 150},  {"noise_sigma", 0.05},
                      {"sim_quad", {{"n1", 128}, {"n2", 64}}}};
    c["predict"] = {{"quad", {{"n1", 64}, {"n2", 32}}}};
  } else {
    throw config_error("unknown preset '" + name + "' (want test1|test2|test3|darcy1)");
  }
  return c;
}

struct Ctx {
  json cfg;
  std::string out_dir = ".";
  std::uint64_t seed = 0;
  int threads = 1;
};

StructuredGrid grid_from(const json& cfg) {
  const auto& d = cfg.at("domain");
  const auto& g = cfg.at("grid");
  return StructuredGrid::make({0.0, 0.0}, d.at("Lx").get<double>(), d.at("Ly").get<double>(),
                              g.at("n1").get<int>(), g.at("n2").get<int>());
}

StructuredGrid quad_grid_from(const json& cfg, const json& quad) {
  const auto& d = cfg.at("domain");
  return StructuredGrid::make({0.0, 0.0}, d.at("Lx").get<double>(), d.at("Ly").get<double>(),
                              quad.at("n1").get<int>(), quad.at("n2").get<int>());
}

/// Tracks written outputs; removes them unless committed (partial runs leave
/// no outputs behind).
class OutputTracker {
public:
  explicit OutputTracker(std::string dir) : dir_(std::move(dir)) {
    fs::create_directories(dir_);
  }
  ~OutputTracker() {
    if (committed_) return;
    for (const auto& p : paths_) {
      std::error_code ec;
      fs::remove(p, ec);
    }
  }
  std::string path(const std::string& name) { return (fs::path(dir_) / name).string(); }
  std::string add(const std::string& name) {
    const std::string p = path(name);
    paths_.push_back(p);
    names_.push_back(name);
    return p;
  }
  void commit(const std::string& command, const json& cfg, std::uint64_t seed,
              const json& stages) {
    io::Manifest m;
    m.command = command;
    m.config = cfg;
    m.seed = seed;
    m.outputs = names_;
    m.stages = stages;
    io::write_manifest(path("manifest_" + command + ".json"), m);
    committed_ = true;
  }

private:
  std::string dir_;
  std::vector<std::string> paths_, names_;
  bool committed_ = false;
};

std::shared_ptr<const BivariateMaternCov> reference_model(const json& ref) {
  BivariateMaternParams p;
  p.sigma_c = p.sigma_f = ref.at("sigma_f").get<double>();
  p.lambda_c = p.lambda_f = p.lambda_cf = ref.at("lambda_f").get<double>();
  p.nu_c = p.nu_f = ref.at("nu_f").get<double>();
  p.rho = 0.0;
  return std::make_shared<BivariateMaternCov>(p);
}

// ---------------------------------------------------------------------------
// generate

int cmd_generate(Ctx& ctx) {
  const json& ref = ctx.cfg.at("reference");
  const auto grid = grid_from(ctx.cfg);
  const auto sim_quad = quad_grid_from(ctx.cfg, ref.at("sim_quad"));
  const int m = ref.at("m").get<int>();
  const double noise = ref.at("noise_sigma").get<double>();

  OutputTracker out(ctx.out_dir);
  const auto model = reference_model(ref);
  const auto factor = NystromFactor::build(model, Scale::Fine, sim_quad);
  const auto fine = simulate(factor, grid, Scale::Fine, 1, ctx.seed).at(0);
  const auto coarse = block_average_grid(fine, m);

  const auto obs_f = sample_observations(fine, ref.at("n_fine").get<int>(), noise, ctx.seed + 1);
  const auto obs_c =
      sample_observations(coarse, ref.at("n_coarse").get<int>(), noise, ctx.seed + 2);

  MultiscaleDataset d;
  d.X_f = obs_f.locations;
  d.y_f = obs_f.values;
  d.X_c = obs_c.locations;
  d.y_c = obs_c.values;
  // noise stays 0 in the dataset: the generator noise is baked into the
  // values and fitted through the nuggets.
  json meta = {{"generator_noise_sigma", noise},
               {"m", m},
               {"eta_c", m * grid.dx()},
               {"lambda_f", ref.at("lambda_f").get<double>()},
               {"nu_f", ref.at("nu_f").get<double>()},
               {"sigma_f", ref.at("sigma_f").get<double>()},
               {"field_seed", ctx.seed},
               {"obs_seeds", {ctx.seed + 1, ctx.seed + 2}}};

  io::write_grid_binary(out.add("ref_fine.grd"), fine);
  io::write_grid_csv(out.add("ref_fine.csv"), fine);
  io::write_grid_binary(out.add("ref_coarse.grd"), coarse);
  io::write_grid_csv(out.add("ref_coarse.csv"), coarse);
  io::write_json_file(out.add("dataset.json"), io::dataset_to_json(d, meta));

  out.commit("generate", ctx.cfg, ctx.seed,
             {{"sim_quad_rank", factor.rank()},
              {"sim_quad_reduced", factor.rank() != grid.size()},
              {"factor_jitter", factor.jitter()}});
  return 0;
}

// ---------------------------------------------------------------------------
// fit

int cmd_fit(Ctx& ctx, const std::string& data_path, const std::string& criterion_name,
            const std::string& model_name, const std::string& out_name) {
  const MultiscaleDataset d = io::dataset_from_json(io::read_json_file(data_path));
  const Criterion crit = criterion_name == "loo" ? Criterion::LOO : Criterion::ML;
  const json& fc = ctx.cfg.at("fit");
  FitOptions opt;
  opt.n_starts = fc.value("n_starts", 5);
  opt.max_evals = fc.value("max_evals", 2000);
  opt.tol = fc.value("tol", 1e-6);
  opt.seed = ctx.seed;

  const std::string name =
      out_name.empty() ? "fit_" + std::string(to_string(crit)) +
                             (model_name == "blockavg" ? "_blockavg" : "") + ".json"
                       : out_name;
  OutputTracker out(ctx.out_dir);
  json options_echo = {{"n_starts", opt.n_starts}, {"max_evals", opt.max_evals},
                       {"tol", opt.tol},           {"fd_step", opt.fd_step},
                       {"seed", opt.seed},         {"data", data_path}};

  if (model_name == "blockavg") {
    const auto grid = grid_from(ctx.cfg);
    BlockAvgFitConfig bc;
    bc.domain = grid.bounds();
    bc.eta_c = ctx.cfg.at("reference").at("m").get<int>() * grid.dx();
    bc.quad_order = fc.value("blockavg_quad_order", 6);
    const auto r = fit_block_avg(d, crit, bc, opt);
    json j = {{"schema", "msgp-fit-blockavg-v1"},
              {"model", "blockavg"},
              {"criterion", to_string(crit)},
              {"params",
               {{"sigma_f", r.sigma_f},
                {"lambda_f", r.lambda_f},
                {"nu_f", r.nu_f},
                {"eta_c", r.eta_c},
                {"nugget_c", r.nugget_c},
                {"nugget_f", r.nugget_f}}},
              {"objective_value", r.objective_value},
              {"log_likelihood", -r.objective_value},
              {"converged", r.converged},
              {"n_evals", r.n_evals},
              {"start_index", r.start_index},
              {"options", options_echo}};
    io::write_json_file(out.add(name), j);
  } else {
    try {
      const FitResult r = fit(d, crit, std::nullopt, opt);
      io::write_json_file(out.add(name), io::fit_report_to_json(r, options_echo));
    } catch (const numerical_error& e) {
      // diagnostics still get written on optimization failure
      io::write_json_file(out.add("fit_error.json"),
                          {{"schema", "msgp-fit-error-v1"},
                           {"criterion", to_string(crit)},
                           {"error", e.what()},
                           {"options", options_echo}});
      out.commit("fit", ctx.cfg, ctx.seed, {{"failed", true}});
      throw;
    }
  }
  out.commit("fit", ctx.cfg, ctx.seed, {{"criterion", to_string(crit)}, {"model", model_name}});
  return 0;
}

// ---------------------------------------------------------------------------
// predict

int cmd_predict(Ctx& ctx, const std::string& data_path, const std::string& params_path,
                const std::string& ref_fine_path, const std::string& ref_coarse_path) {
  const MultiscaleDataset d = io::dataset_from_json(io::read_json_file(data_path));
  const BivariateMaternParams p = io::params_from_file(params_path);
  const auto grid = grid_from(ctx.cfg);
  const auto quad = quad_grid_from(ctx.cfg, ctx.cfg.at("predict").at("quad"));

  const auto model = std::make_shared<BivariateMaternCov>(p);  // infeasible params throw here
  OutputTracker out(ctx.out_dir);
  GridPredictor pred(model, d, quad);

  json report = {{"schema", "msgp-predict-v1"}, {"params", io::params_to_json(p)}};
  for (Scale s : {Scale::Fine, Scale::Coarse}) {
    const auto post = pred.predict(grid, s);
    const std::string tag = to_string(s);
    FieldRealization mean{grid, post.mean, s, ctx.seed};
    FieldRealization var{grid, post.variance, s, ctx.seed};
    io::write_grid_binary(out.add("pred_" + tag + "_mean.grd"), mean);
    io::write_grid_csv(out.add("pred_" + tag + "_mean.csv"), mean);
    io::write_grid_binary(out.add("pred_" + tag + "_var.grd"), var);
    io::write_grid_csv(out.add("pred_" + tag + "_var.csv"), var);
    report["clamped_" + tag] = post.clamped;

    const std::string ref_path = s == Scale::Fine ? ref_fine_path : ref_coarse_path;
    if (!ref_path.empty()) {
      const FieldRealization ref = io::read_grid_binary(ref_path);
      PosteriorSummary ps;
      ps.targets = grid.tagged_centroids(s);
      ps.mean = post.mean;
      ps.variance = post.variance;
      report["mse_" + tag] = mse(ps, ref);
    }
  }
  report["jitter"] = pred.jitter();
  io::write_json_file(out.add("predict_report.json"), report);
  out.commit("predict", ctx.cfg, ctx.seed,
             {{"quad", {{"n1", quad.n1}, {"n2", quad.n2}}}, {"jitter", pred.jitter()}});
  return 0;
}

// ---------------------------------------------------------------------------
// variogram

int cmd_variogram(Ctx& ctx, const std::string& data_path, const std::string& params_path,
                  const std::string& model_name) {
  const json& vc = ctx.cfg.at("variogram");
  const auto& dom = ctx.cfg.at("domain");
  const double diag = std::hypot(dom.at("Lx").get<double>(), dom.at("Ly").get<double>());
  const double max_lag = vc.value("max_lag_frac", 0.5) * diag;
  const int n_bins = vc.value("n_bins", 20);

  std::vector<io::VariogramCurve> curves;

  if (!data_path.empty()) {
    const MultiscaleDataset d = io::dataset_from_json(io::read_json_file(data_path));
    if (d.n_f() >= 2)
      curves.push_back({"fine", "empirical", empirical_variogram(d.X_f, d.y_f, n_bins, max_lag)});
    if (d.n_c() >= 2)
      curves.push_back(
          {"coarse", "empirical", empirical_variogram(d.X_c, d.y_c, n_bins, max_lag)});
    if (d.n_f() >= 2 && d.n_c() >= 2)
      curves.push_back({"crosspseudo", "empirical",
                        empirical_cross_variogram(d.X_c, d.y_c, d.X_f, d.y_f, n_bins, max_lag)});
  }

  if (!params_path.empty()) {
    const int n_pts = 100;
    VariogramBins grid_bins;
    grid_bins.lag.resize(n_pts);
    grid_bins.value.resize(n_pts);
    grid_bins.count = Eigen::VectorXi::Zero(n_pts);
    for (int i = 0; i < n_pts; ++i) grid_bins.lag(i) = max_lag * (i + 1) / n_pts;

    if (model_name == "blockavg") {
      const json j = io::read_json_file(params_path);
      const json& pj = j.contains("params") ? j["params"] : j;
      const auto grid = grid_from(ctx.cfg);
      BlockAvgCov cov(pj.at("sigma_f").get<double>(), pj.at("lambda_f").get<double>(),
                      pj.at("nu_f").get<double>(), pj.at("eta_c").get<double>(), grid.bounds(),
                      16);
      const Point center{0.5 * grid.Lx, 0.5 * grid.Ly};
      std::vector<double> rs(grid_bins.lag.data(), grid_bins.lag.data() + n_pts);
      // keep displaced points inside the domain
      for (auto& r : rs) r = std::min(r, 0.49 * grid.Lx);
      const auto gf = pseudo_isotropic_variogram(cov, Scale::Fine, Scale::Fine, center, rs);
      const auto gc = pseudo_isotropic_variogram(cov, Scale::Coarse, Scale::Coarse, center, rs);
      const auto gcf = pseudo_isotropic_variogram(cov, Scale::Coarse, Scale::Fine, center, rs);
      auto to_bins = [&](const std::vector<double>& g) {
        VariogramBins b = grid_bins;
        for (int i = 0; i < n_pts; ++i) {
          b.lag(i) = rs[i];
          b.value(i) = g[i];
        }
        return b;
      };
      curves.push_back({"fine", "model", to_bins(gf)});
      curves.push_back({"coarse", "model", to_bins(gc)});
      curves.push_back({"cross", "model", to_bins(gcf)});
    } else {
      const BivariateMaternParams p = io::params_from_file(params_path);
      BivariateMaternCov cov(p, 1e-2);
      const Point origin{0.0, 0.0};
      auto curve = [&](Scale a, Scale b) {
        VariogramBins bins = grid_bins;
        for (int i = 0; i < n_pts; ++i) {
          const Point xr{bins.lag(i), 0.0};
          bins.value(i) = cov.cov_latent(origin, a, origin, b) - cov.cov_latent(origin, a, xr, b);
        }
        return bins;
      };
      curves.push_back({"fine", "model", curve(Scale::Fine, Scale::Fine)});
      curves.push_back({"coarse", "model", curve(Scale::Coarse, Scale::Coarse)});
      curves.push_back({"cross", "model", curve(Scale::Coarse, Scale::Fine)});
      // pseudo form comparable with the empirical cross curve
      VariogramBins pseudo = grid_bins;
      for (int i = 0; i < n_pts; ++i) {
        const Point xr{pseudo.lag(i), 0.0};
        pseudo.value(i) = 0.5 * (p.sigma_c * p.sigma_c + p.sigma_f * p.sigma_f) -
                          cov.cov_latent(origin, Scale::Coarse, xr, Scale::Fine);
      }
      curves.push_back({"crosspseudo", "model", pseudo});
    }
  }

  if (curves.empty())
    throw config_error("variogram: need --data and/or --params to produce curves");

  OutputTracker out(ctx.out_dir);
  io::write_variogram_csv(out.add("variogram.csv"), curves);
  out.commit("variogram", ctx.cfg, ctx.seed, {{"n_bins", n_bins}, {"max_lag", max_lag}});
  return 0;
}

// ---------------------------------------------------------------------------
// simulate

int cmd_simulate(Ctx& ctx, const std::string& params_path, bool with_csv) {
  const json& sc = ctx.cfg.at("simulate");
  const auto grid = grid_from(ctx.cfg);
  const auto quad = quad_grid_from(ctx.cfg, sc.at("quad"));
  const int n_real = sc.value("n_real", 4);
  const Scale scale = sc.value("scale", "fine") == std::string("coarse") ? Scale::Coarse
                                                                         : Scale::Fine;
  const BivariateMaternParams p = io::params_from_file(params_path);
  const auto model = std::make_shared<BivariateMaternCov>(p);

  OutputTracker out(ctx.out_dir);
  const auto factor = NystromFactor::build(model, scale, quad);
  const auto fields = simulate(factor, grid, scale, n_real, ctx.seed);
  for (int k = 0; k < n_real; ++k) {
    const std::string base = "sim_" + std::string(to_string(scale)) + "_" + std::to_string(k);
    io::write_grid_binary(out.add(base + ".grd"), fields[k]);
    if (with_csv) io::write_grid_csv(out.add(base + ".csv"), fields[k]);
  }
  out.commit("simulate", ctx.cfg, ctx.seed,
             {{"rank", factor.rank()}, {"jitter", factor.jitter()}, {"n_real", n_real}});
  return 0;
}

// ---------------------------------------------------------------------------
// darcy pipeline

struct ArmResult {
  HeadEnsembleStats stats;
  MmseResult updated;
};

json profile_csv_and_norms(OutputTracker& out, const std::string& arm,
                           const StructuredGrid& grid, const std::vector<int>& profile,
                           const std::vector<int>& nodes, const ArmResult& r,
                           const Eigen::VectorXd& h_ref_profile, double h_L, double h_R) {
  const double dh = h_L - h_R;
  // locate profile entries inside the node set
  std::vector<int> at(profile.size());
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const auto it = std::find(nodes.begin(), nodes.end(), profile[i]);
    at[i] = static_cast<int>(it - nodes.begin());
  }
  auto emit = [&](const std::string& name, const Eigen::VectorXd& mean,
                  const Eigen::MatrixXd& cov) {
    std::string csv = "x1,mean,lo95,hi95,variance,reference\n";
    Eigen::VectorXd var_n(profile.size());
    for (std::size_t i = 0; i < profile.size(); ++i) {
      const double mn = (mean(at[i]) - h_R) / dh;
      const double vn = cov(at[i], at[i]) / (dh * dh);
      var_n(static_cast<Eigen::Index>(i)) = std::max(vn, 0.0);
      const double sd = std::sqrt(std::max(vn, 0.0));
      const double rn = (h_ref_profile(static_cast<Eigen::Index>(i)) - h_R) / dh;
      csv += io::fmt17(grid.centroid(profile[i]).x) + "," + io::fmt17(mn) + "," +
             io::fmt17(mn - 1.96 * sd) + "," + io::fmt17(mn + 1.96 * sd) + "," + io::fmt17(vn) +
             "," + io::fmt17(rn) + "\n";
    }
    io::write_text(out.add(name), csv);
    return var_n;
  };
  const Eigen::VectorXd var_prior = emit("profile_" + arm + "_prior.csv", r.stats.mean,
                                         r.stats.cov);
  const Eigen::VectorXd var_cond = emit("profile_" + arm + "_cond.csv", r.updated.mean,
                                        r.updated.cov);
  // coverage of the reference by the conditioned 95% band
  int inside = 0;
  for (std::size_t i = 0; i < profile.size(); ++i) {
    const double mn = (r.updated.mean(at[i]) - h_R) / dh;
    const double sd = std::sqrt(std::max(r.updated.cov(at[i], at[i]), 0.0)) / std::abs(dh);
    const double rn = (h_ref_profile(static_cast<Eigen::Index>(i)) - h_R) / dh;
    if (rn >= mn - 1.96 * sd && rn <= mn + 1.96 * sd) ++inside;
  }
  json j;
  j["prior_variance_norm"] = profile_variance_norm(var_prior, grid.dx());
  j["conditioned_variance_norm"] = profile_variance_norm(var_cond, grid.dx());
  j["coverage_95"] = static_cast<double>(inside) / static_cast<double>(profile.size());
  return j;
}

int cmd_darcy(Ctx& ctx, const std::string& data_path, const std::string& params_path,
              const std::string& params_fine_path, const std::string& ref_fine_path) {
  const json& dc = ctx.cfg.at("darcy");
  const MultiscaleDataset d_full = io::dataset_from_json(io::read_json_file(data_path));
  const FieldRealization ref = io::read_grid_binary(ref_fine_path);
  const auto grid = grid_from(ctx.cfg);
  if (!ref.grid.same_geometry(grid))
    throw config_error("darcy: reference field grid does not match the config grid");

  DarcyProblem prob;
  prob.grid = grid;
  prob.K_G = dc.value("K_G", 1.0);
  prob.h_L = dc.value("h_L", 1.0);
  prob.h_R = dc.value("h_R", 0.0);
  const int n_real = dc.value("n_real", 500);
  const int n_head_obs = dc.value("n_head_obs", 20);
  const double sigma_eh = dc.value("head_noise_frac", 0.05) * (prob.h_L - prob.h_R);

  OutputTracker out(ctx.out_dir);

  // reference head and sparse noisy head observations
  const Eigen::VectorXd h_ref = solve_darcy(prob, ref.values);
  const auto profile = profile_node_ids(grid);
  rng::Stream hs(ctx.seed, kStreamHeadObs);
  std::vector<int> all(grid.size());
  std::iota(all.begin(), all.end(), 0);
  for (int i = 0; i < n_head_obs; ++i) {
    const int j = i + static_cast<int>(hs.below(static_cast<std::uint64_t>(grid.size() - i)));
    std::swap(all[i], all[j]);
  }
  HeadObservationSet hobs;
  hobs.nodes.assign(all.begin(), all.begin() + n_head_obs);
  hobs.sigma_eh = sigma_eh;
  hobs.h_obs.resize(n_head_obs);
  for (int i = 0; i < n_head_obs; ++i) hobs.h_obs(i) = h_ref(hobs.nodes[i]) + sigma_eh * hs.normal();

  // moment nodes: profile plus observation cells
  std::set<int> node_set(profile.begin(), profile.end());
  node_set.insert(hobs.nodes.begin(), hobs.nodes.end());
  const std::vector<int> nodes(node_set.begin(), node_set.end());

  Eigen::VectorXd h_ref_profile(profile.size());
  for (std::size_t i = 0; i < profile.size(); ++i)
    h_ref_profile(static_cast<Eigen::Index>(i)) = h_ref(profile[i]);

  MultiscaleDataset d_fine;
  d_fine.X_f = d_full.X_f;
  d_fine.y_f = d_full.y_f;
  d_fine.noise_f = d_full.noise_f;

  json report = {{"schema", "msgp-darcy-v1"},
                 {"n_real", n_real},
                 {"n_head_obs", n_head_obs},
                 {"sigma_eh", sigma_eh}};
  json stages = json::object();

  struct Arm {
    const char* name;
    const MultiscaleDataset* data;
    std::string params_path;
  };
  const Arm arms[] = {{"fine_only", &d_fine, params_fine_path},
                      {"multiscale", &d_full, params_path}};
  for (const Arm& arm : arms) {
    const BivariateMaternParams p = io::params_from_file(arm.params_path);
    const auto model = std::make_shared<BivariateMaternCov>(p);
    ConditionalSampler sampler(model, *arm.data, grid, ctx.seed);
    ArmResult r;
    r.stats = mc_propagate(
        prob, [&](int k) { return sampler.draw(k); }, n_real, ctx.seed, nodes);
    r.updated = mmse_update(r.stats, hobs);
    report[arm.name] = profile_csv_and_norms(out, arm.name, grid, profile, nodes, r,
                                             h_ref_profile, prob.h_L, prob.h_R);
    stages[arm.name] = {{"sampler_jitter", sampler.jitter()}, {"params", arm.params_path}};
  }

  // Table-4-shaped summary
  report["norms"] = {{"prior",
                      {{"fine_only", report["fine_only"]["prior_variance_norm"]},
                       {"multiscale", report["multiscale"]["prior_variance_norm"]}}},
                     {"conditioned",
                      {{"fine_only", report["fine_only"]["conditioned_variance_norm"]},
                       {"multiscale", report["multiscale"]["conditioned_variance_norm"]}}}};
  io::write_json_file(out.add("darcy_report.json"), report);
  out.commit("darcy", ctx.cfg, ctx.seed, stages);
  return 0;
}

} // namespace

// ---------------------------------------------------------------------------

int main(int argc, char** argv) {
  CLI::App app{"msgp: multiscale Gaussian-process regression toolkit"};
  app.footer(
      "Randomness: Philox4x32-10 counter-based generator with per-realization\n"
      "substreams; identical (config, seed) reproduce outputs byte-identically\n"
      "for any --threads (set SOURCE_DATE_EPOCH to pin manifest timestamps).");

  std::string config_path, preset, out_dir = ".";
  std::uint64_t seed = 0;
  bool seed_given = false;
  int threads = 1;
  app.add_option("--config", config_path, "JSON config file (msgp-config-v1)")
      ->envname("MSGP_CONFIG");
  app.add_option("--preset", preset, "built-in config: test1|test2|test3|darcy1")
      ->envname("MSGP_PRESET");
  app.add_option("--out-dir", out_dir, "output directory")->envname("MSGP_OUT_DIR");
  auto* seed_opt = app.add_option("--seed", seed, "seed override")->envname("MSGP_SEED");
  app.add_option("--threads", threads, "worker threads")->envname("MSGP_THREADS");

  auto* gen = app.add_subcommand("generate", "simulate reference fields and sample a dataset");
  gen->fallthrough();

  std::string data_path, params_path, params_fine_path, ref_fine_path, ref_coarse_path;
  std::string criterion = "ml", model_name = "bimatern", fit_out;
  auto* fit_cmd = app.add_subcommand("fit", "estimate covariance hyperparameters");
  fit_cmd->fallthrough();
  fit_cmd->add_option("--data", data_path, "dataset file")->required();
  fit_cmd->add_option("--criterion", criterion, "ml|loo")
      ->check(CLI::IsMember({"ml", "loo"}));
  fit_cmd->add_option("--model", model_name, "bimatern|blockavg")
      ->check(CLI::IsMember({"bimatern", "blockavg"}));
  fit_cmd->add_option("--out", fit_out, "report file name");

  auto* pred = app.add_subcommand("predict", "conditional mean/variance grids per scale");
  pred->fallthrough();
  pred->add_option("--data", data_path, "dataset file")->required();
  pred->add_option("--params", params_path, "parameter or fit-report file")->required();
  pred->add_option("--ref-fine", ref_fine_path, "reference fine grid for MSE");
  pred->add_option("--ref-coarse", ref_coarse_path, "reference coarse grid for MSE");

  auto* vgram = app.add_subcommand("variogram", "empirical and model variogram curves");
  vgram->fallthrough();
  vgram->add_option("--data", data_path, "dataset file");
  vgram->add_option("--params", params_path, "parameter or fit-report file");
  vgram->add_option("--model", model_name, "bimatern|blockavg")
      ->check(CLI::IsMember({"bimatern", "blockavg"}));

  bool sim_csv = false;
  auto* sim = app.add_subcommand("simulate", "unconditional realizations");
  sim->fallthrough();
  sim->add_option("--params", params_path, "parameter or fit-report file")->required();
  sim->add_flag("--csv", sim_csv, "also write CSV grids");

  auto* darcy_cmd = app.add_subcommand("darcy", "flow uncertainty-propagation pipeline");
  darcy_cmd->fallthrough();
  darcy_cmd->add_option("--data", data_path, "dataset file")->required();
  darcy_cmd->add_option("--params", params_path, "multiscale fit report")->required();
  darcy_cmd->add_option("--params-fine", params_fine_path, "fine-only fit report")->required();
  darcy_cmd->add_option("--ref-fine", ref_fine_path, "reference fine log-conductivity grid")
      ->required();

  app.require_subcommand(1);

  try {
    app.parse(argc, argv);
    seed_given = seed_opt->count() > 0 || std::getenv("MSGP_SEED") != nullptr;

    Ctx ctx;
    if (!config_path.empty()) {
      ctx.cfg = io::read_json_file(config_path);
      if (!ctx.cfg.contains("schema") || ctx.cfg["schema"] != "msgp-config-v1")
        throw config_error(config_path + ": missing or unknown schema (want msgp-config-v1)");
    } else if (!preset.empty()) {
      ctx.cfg = preset_config(preset);
    } else {
      ctx.cfg = preset_config("test1");
    }
    ctx.out_dir = out_dir;
    ctx.seed = seed_given ? seed : ctx.cfg.value("seed", 20240601ull);
    ctx.cfg["seed"] = ctx.seed;
    ctx.threads = std::max(1, threads);
    omp_set_num_threads(ctx.threads);

    if (gen->parsed()) return cmd_generate(ctx);
    if (fit_cmd->parsed()) return cmd_fit(ctx, data_path, criterion, model_name, fit_out);
    if (pred->parsed()) return cmd_predict(ctx, data_path, params_path, ref_fine_path,
                                           ref_coarse_path);
    if (vgram->parsed()) return cmd_variogram(ctx, data_path, params_path, model_name);
    if (sim->parsed()) return cmd_simulate(ctx, params_path, sim_csv);
    if (darcy_cmd->parsed())
      return cmd_darcy(ctx, data_path, params_path, params_fine_path, ref_fine_path);
    return 1;
  } catch (const CLI::ParseError& e) {
    return app.exit(e);
  } catch (const numerical_error& e) {
    std::fprintf(stderr, "numerical failure: %s\n", e.what());
    return 2;
  } catch (const config_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const domain_error& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  } catch (const std::exception& e) {
    std::fprintf(stderr, "error: %s\n", e.what());
    return 1;
  }
}
