// Copyright 2026 The Mallows Lab Authors
//
// Licensed under the Apache License, Version 2.0 (the "License");
// you may not use this file except in compliance with the License.
// You may obtain a copy of the License at
//
//      http://www.apache.org/licenses/LICENSE-2.0
//
// Unless required by applicable law or agreed to in writing, software
// distributed under the License is distributed on an "AS IS" BASIS,
// WITHOUT WARRANTIES OR CONDITIONS OF ANY KIND, either express or implied.
// See the License for the specific language governing permissions and
// limitations under the License.

// mallows_lab: command-line front end. Every run writes one JSONL record.

#include <csignal>
#include <fstream>
#include <functional>
#include <iostream>
#include <numeric>

#include "CLI11.hpp"
#include "mallows/distance.hpp"
#include "mallows/experiment.hpp"
#include "mallows/identifiability.hpp"
#include "mallows/io.hpp"
#include "mallows/learner_general.hpp"
#include "mallows/learner_separated.hpp"
#include "mallows/lowerbound.hpp"
#include "mallows/oracle_service.hpp"

using namespace mallows;

namespace {

// Exit codes: 0 pass, 1 failed check or learner failure, 2 bad input,
// 3 resource limit.
int run(const std::string& name, const json& config, std::optional<std::uint64_t> seed, int workers,
        const std::string& out, const std::function<void(ExperimentRecord&)>& body) {
  ExperimentRecord rec(name, config, seed);
  rec.set_workers(workers);
  int code = 0;
  try {
    body(rec);
  } catch (const config_error& e) {
    rec.set_error("config", e.what());
    code = 2;
  } catch (const learning_failure& e) {
    rec.set_error("learning-failure", e.what());
    rec.results()["candidate_count"] = e.candidate_count;
    rec.results()["best_gap"] = e.best_gap;
    code = 1;
  } catch (const precondition_violation& e) {
    rec.set_error("precondition", e.what());
    code = 2;
  } catch (const resource_limit_error& e) {
    rec.set_error("resource-limit", e.what());
    code = 3;
  } catch (const std::invalid_argument& e) {
    rec.set_error("invalid-argument", e.what());
    code = 2;
  } catch (const std::exception& e) {
    rec.set_error("error", e.what());
    code = 1;
  }
  const json j = rec.to_json();
  if (j.contains("error")) std::cerr << "error: " << j["error"]["message"].get<std::string>() << "\n";
  JsonlWriter(out).write(j);
  if (code == 0 && !rec.passed()) code = 1;
  return code;
}

std::string fnv_digest(const std::vector<Permutation>& perms) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (const auto& p : perms) {
    for (int e : p.ranking()) {
      h ^= static_cast<std::uint64_t>(e);
      h *= 0x100000001b3ULL;
    }
    h ^= 0xff;
    h *= 0x100000001b3ULL;
  }
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx", static_cast<unsigned long long>(h));
  return buf;
}

// Best relabelling of est onto truth: fewest centre mismatches, then smallest
// largest parameter gap.
json compare_to_truth(const MallowsMixture& truth, const MallowsMixture& est) {
  json j{{"k_truth", truth.k()}, {"k_estimate", est.k()}};
  if (truth.k() != est.k() || truth.k() > 7) {
    j["centers_exact"] = false;
    return j;
  }
  std::vector<int> perm(est.k());
  std::iota(perm.begin(), perm.end(), 0);
  int best_miss = 1 << 30;
  double best_phi = 0.0, best_w = 0.0;
  do {
    int miss = 0;
    double gp = 0.0, gw = 0.0;
    for (int i = 0; i < truth.k(); ++i) {
      const auto& a = truth.components[i];
      const auto& b = est.components[perm[i]];
      if (a.center != b.center) ++miss;
      gp = std::max(gp, std::abs(a.phi - b.phi));
      gw = std::max(gw, std::abs(truth.weights[i] - est.weights[perm[i]]));
    }
    if (miss < best_miss || (miss == best_miss && std::max(gp, gw) < std::max(best_phi, best_w))) {
      best_miss = miss;
      best_phi = gp;
      best_w = gw;
    }
  } while (std::next_permutation(perm.begin(), perm.end()));
  j["centers_exact"] = best_miss == 0;
  j["center_mismatches"] = best_miss;
  j["max_phi_gap"] = best_phi;
  j["max_weight_gap"] = best_w;
  return j;
}

json to_json(const CloseTest& t) {
  return {{"accept", t.accept}, {"statistic", t.statistic}, {"threshold", t.threshold},
          {"log10_formula_threshold", t.log10_formula_threshold}, {"order", t.order}};
}

json to_json(const SeparatedTest& t) {
  return {{"accept", t.accept}, {"order_gap", t.order_gap}, {"order_threshold", t.order_threshold},
          {"phi_gap", t.phi_gap}, {"phi_threshold", t.phi_threshold},
          {"log10_order_formula", t.log10_order_formula}, {"log10_phi_formula", t.log10_phi_formula},
          {"reason", t.reason}};
}

json matrix_json(const std::vector<std::vector<double>>& m) { return m; }

void add_common(CLI::App* sc, std::string& out, int* workers = nullptr, std::uint64_t* seed = nullptr) {
  sc->add_option("--out", out, "JSONL record file (appended); '-' for stdout, 'stderr' for stderr")
      ->capture_default_str();
  if (workers) sc->add_option("--workers", *workers, "worker threads")->check(CLI::Range(1, 256))->capture_default_str();
  if (seed) sc->add_option("--seed", *seed, "master seed")->capture_default_str();
}

std::atomic<bool> g_stop{false};
extern "C" void on_signal(int) { g_stop.store(true); }

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Mallows mixture lab: sampling, exact distances, identifiability checks, learners and "
               "lower-bound constructions. Each run appends one JSON record (JSONL). "
               "MALLOWS_LAB_MAX_N sets the enumeration cutoff (default 8, at most 10)."};
  app.require_subcommand(1);
  std::function<int()> action;

  // sample ------------------------------------------------------------------
  struct {
    std::string config, out = "stderr", perms_out = "-";
    std::size_t count = 1000;
    std::uint64_t seed = 0;
    int workers = 1;
    bool trace = false;
  } so;
  auto* sample = app.add_subcommand("sample", "draw permutations from a mixture (one per line)");
  sample->add_option("--config", so.config, "mixture config (JSON)")->required();
  sample->add_option("--count", so.count, "number of draws")->capture_default_str();
  sample->add_option("--perms-out", so.perms_out, "permutation output file, '-' for stdout")->capture_default_str();
  sample->add_flag("--trace", so.trace, "append '# component=i' to each line");
  add_common(sample, so.out, &so.workers, &so.seed);
  sample->callback([&] {
    action = [&] {
      const json cfg{{"config", so.config}, {"count", so.count}, {"trace", so.trace}};
      return run("sample", cfg, so.seed, so.workers, so.out, [&](ExperimentRecord& rec) {
        const auto mix = load_mixture(so.config);
        rec.results()["mixture"] = mixture_to_json(mix);
        const auto s = sample_mixture(mix, so.count, so.seed, so.workers, so.trace);
        if (so.perms_out == "-") {
          write_permutations(std::cout, s.perms, so.trace ? &s.components : nullptr);
          std::cout.flush();
        } else {
          std::ofstream f(so.perms_out);
          if (!f) throw std::invalid_argument("cannot open " + so.perms_out);
          write_permutations(f, s.perms, so.trace ? &s.components : nullptr);
        }
        rec.results()["count"] = s.perms.size();
        rec.results()["digest"] = fnv_digest(s.perms);
      });
    };
  });

  // pmf ---------------------------------------------------------------------
  struct {
    std::string config, out = "-", csv;
    std::vector<std::string> perms;
    bool all = false;
  } po;
  auto* pmfc = app.add_subcommand("pmf", "probability mass of given permutations (or all of S_n)");
  pmfc->add_option("--config", po.config, "mixture config (JSON)")->required();
  pmfc->add_option("--perm", po.perms, "permutation, e.g. \"3 1 2\" (repeatable)");
  pmfc->add_flag("--all", po.all, "every permutation in lexicographic order (n within the cutoff)");
  pmfc->add_option("--csv", po.csv, "also write rank,permutation,pmf rows to this CSV file");
  add_common(pmfc, po.out);
  pmfc->callback([&] {
    action = [&] {
      const json cfg{{"config", po.config}, {"perm", po.perms}, {"all", po.all}};
      return run("pmf", cfg, std::nullopt, 1, po.out, [&](ExperimentRecord& rec) {
        const auto mix = load_mixture(po.config);
        std::vector<Permutation> ps;
        for (const auto& s : po.perms) ps.push_back(parse_permutation(s));
        for (const auto& p : ps)
          if (p.n() != mix.n()) throw std::invalid_argument("permutation length differs from n");
        if (po.all) ps = enumerate_sn(mix.n());
        if (ps.empty()) throw std::invalid_argument("give --perm or --all");
        json entries = json::array();
        std::ofstream csv;
        if (!po.csv.empty()) {
          csv.open(po.csv);
          csv << "rank,permutation,pmf\n";
        }
        double sum = 0.0;
        for (const auto& p : ps) {
          const double v = pmf(mix, p);
          sum += v;
          entries.push_back({{"perm", p.str()}, {"pmf", v}});
          if (csv) csv << lex_rank(p) << "," << p.str() << "," << format_number(v) << "\n";
        }
        rec.results()["entries"] = entries;
        if (po.all) {
          rec.results()["sum"] = sum;
          rec.expect("pmf-sums-to-one", "normalisation", std::abs(sum - 1.0), "<=", 1e-12);
        }
      });
    };
  });

  // tv ----------------------------------------------------------------------
  struct {
    std::string config, other, mode = "exact", out = "-";
    std::size_t samples = 100000;
    std::uint64_t seed = 0;
    int workers = 1;
  } to;
  auto* tvc = app.add_subcommand("tv", "total variation distance between two mixtures");
  tvc->add_option("--config", to.config, "first mixture config")->required();
  tvc->add_option("--other", to.other, "second mixture config")->required();
  tvc->add_option("--mode", to.mode, "exact | empirical")->check(CLI::IsMember({"exact", "empirical"}))->capture_default_str();
  tvc->add_option("--samples", to.samples, "draws per side in empirical mode")->capture_default_str();
  add_common(tvc, to.out, &to.workers, &to.seed);
  tvc->callback([&] {
    action = [&] {
      const json cfg{{"config", to.config}, {"other", to.other}, {"mode", to.mode}, {"samples", to.samples}};
      const bool emp = to.mode == "empirical";
      return run("tv", cfg, emp ? std::optional(to.seed) : std::nullopt, to.workers, to.out,
                 [&](ExperimentRecord& rec) {
        const auto a = load_mixture(to.config), b = load_mixture(to.other);
        if (a.n() != b.n()) throw config_error("other.n", "differs from config.n");
        TVReport r;
        if (emp) {
          const auto sa = sample_mixture(a, to.samples, derive_seed(to.seed, "tv", 0), to.workers);
          const auto sb = sample_mixture(b, to.samples, derive_seed(to.seed, "tv", 1), to.workers);
          r = tv_empirical(sa.perms, sb.perms);
        } else {
          r = tv_exact(a, b);
        }
        rec.results() = {{"value", r.value}, {"mode", r.mode}, {"tolerance", r.tolerance}};
      });
    };
  });

  // zagier ------------------------------------------------------------------
  struct {
    std::vector<int> n{3};
    std::vector<std::string> phi{"1/2"};
    std::string out = "-";
  } zo;
  auto* zag = app.add_subcommand("zagier", "exact determinant of A_n(phi) against the product formula");
  zag->add_option("--n", zo.n, "n in [1,5] (repeatable)")->check(CLI::Range(1, 5))->capture_default_str();
  zag->add_option("--phi", zo.phi, "rational phi in [0,1), e.g. 1/2 (repeatable)")->capture_default_str();
  add_common(zag, zo.out);
  zag->callback([&] {
    action = [&] {
      const json cfg{{"n", zo.n}, {"phi", zo.phi}};
      return run("zagier", cfg, std::nullopt, 1, zo.out, [&](ExperimentRecord& rec) {
        json cases = json::array();
        bool all = true;
        for (int n : zo.n)
          for (const auto& ps : zo.phi) {
            const auto r = zagier_check(n, parse_rational(ps));
            json c{{"n", n}, {"phi", r.phi.get_str()},
                   {"det_num", r.det.get_num().get_str()}, {"det_den", r.det.get_den().get_str()},
                   {"formula_num", r.formula.get_num().get_str()},
                   {"formula_den", r.formula.get_den().get_str()}, {"equal", r.equal}};
            all = all && r.equal;
            rec.expect_true("zagier n=" + std::to_string(n) + " phi=" + ps, "zagier-identity", r.equal);
            cases.push_back(c);
          }
        if (cases.size() == 1) rec.results() = cases[0];
        rec.results()["cases"] = cases;
        rec.results()["equal"] = all;
      });
    };
  });

  // kruskal -----------------------------------------------------------------
  struct {
    int n = 3, random_k = 0;
    double phi = 0.5, eps = 0.0, phi_step = 0.0;
    std::string perms, out = "-";
    std::size_t trials = 1;
    std::uint64_t seed = 0;
    int workers = 1;
  } ko;
  auto* kru = app.add_subcommand("kruskal", "robust Kruskal rank checks on kernel columns");
  kru->add_option("--n", ko.n, "n in [1,5]")->check(CLI::Range(1, 5))->capture_default_str();
  kru->add_option("--phi", ko.phi, "scaling parameter")->check(CLI::Range(0.0, 1.0))->capture_default_str();
  kru->add_option("--eps", ko.eps, "margin with phi <= 1 - eps (default 1 - phi)");
  kru->add_option("--perms", ko.perms, "column permutations, e.g. \"1 2 3;2 1 3\"");
  kru->add_option("--random-k", ko.random_k, "draw this many distinct random columns per trial");
  kru->add_option("--trials", ko.trials, "random trials")->capture_default_str();
  kru->add_option("--phi-step", ko.phi_step, "column i uses phi + i*step (perturbed variant, gap reported)");
  add_common(kru, ko.out, &ko.workers, &ko.seed);
  kru->callback([&] {
    action = [&] {
      const json cfg{{"n", ko.n}, {"phi", ko.phi}, {"eps", ko.eps}, {"perms", ko.perms},
                     {"random_k", ko.random_k}, {"trials", ko.trials}, {"phi_step", ko.phi_step}};
      return run("kruskal", cfg, ko.random_k > 0 ? std::optional(ko.seed) : std::nullopt, ko.workers, ko.out,
                 [&](ExperimentRecord& rec) {
        const double eps = ko.eps > 0.0 ? ko.eps : 1.0 - ko.phi;
        if (!(eps > 0.0) || ko.phi > 1.0 - eps + 1e-15) throw config_error("eps", "need phi <= 1 - eps with eps > 0");
        std::vector<std::vector<Permutation>> sets;
        if (!ko.perms.empty()) {
          sets.push_back(parse_permutation_list(ko.perms));
        } else if (ko.random_k > 0) {
          if (static_cast<std::uint64_t>(ko.random_k) > factorial(ko.n)) throw config_error("random-k", "exceeds n!");
          sets = run_trials(ko.trials, ko.workers, ko.seed, "kruskal", [&](std::size_t, std::uint64_t s) {
            Rng rng(s);
            std::vector<std::uint64_t> ranks(factorial(ko.n));
            std::iota(ranks.begin(), ranks.end(), 0);
            std::shuffle(ranks.begin(), ranks.end(), rng);
            std::vector<Permutation> ps;
            for (int i = 0; i < ko.random_k; ++i) ps.push_back(lex_unrank(ko.n, ranks[i]));
            return ps;
          });
        } else {
          throw config_error("perms", "give --perms or --random-k");
        }
        json trials = json::array();
        for (std::size_t t = 0; t < sets.size(); ++t) {
          const auto& ps = sets[t];
          json tj{{"perms", json::array()}};
          for (const auto& p : ps) tj["perms"].push_back(p.str());
          const auto pr = kruskal_projection(ko.n, ko.phi, ps, eps);
          tj["projection"] = {{"value", pr.value}, {"bound", pr.bound}, {"log10_bound", pr.log10_bound}, {"holds", pr.holds}};
          rec.expect("projection trial " + std::to_string(t), "kruskal-projection", pr.value, ">=", pr.bound);
          if (ko.phi_step != 0.0) {
            std::vector<double> phis;
            for (std::size_t i = 0; i < ps.size(); ++i) phis.push_back(ko.phi + i * ko.phi_step);
            const auto rr = robust_kruskal_perturbed(ko.n, phis, ps, eps, false);
            tj["perturbed"] = {{"min_l1", rr.value}, {"log10_bound", rr.log10_bound}, {"holds", rr.holds},
                               {"gap", rr.gap}, {"gap_satisfied", rr.gap_satisfied}, {"z", rr.z}};
            rec.expect_true("perturbed trial " + std::to_string(t), "robust-kruskal-l1", rr.holds);
          } else {
            const auto lr = kruskal_l1(ko.n, ko.phi, ps, eps);
            tj["l1"] = {{"min_l1", lr.value}, {"bound", lr.bound}, {"log10_bound", lr.log10_bound},
                        {"holds", lr.holds}, {"z", lr.z}};
            rec.expect("l1 trial " + std::to_string(t), "kruskal-l1", lr.value, ">=", lr.bound);
          }
          trials.push_back(tj);
        }
        rec.results()["trials"] = trials;
      });
    };
  });

  // identifiability ---------------------------------------------------------
  struct {
    std::string config, other, out = "-";
    std::vector<double> coeffs;
    double mu = 0.05;
  } io;
  auto* idc = app.add_subcommand("identifiability", "L1 lower bound for combinations of non-degenerate models");
  idc->add_option("--config", io.config, "mixture config; its components are the models")->required();
  idc->add_option("--coeffs", io.coeffs, "coefficients with max |z| = 1 (default +1, -1, +1, ...)");
  idc->add_option("--mu", io.mu, "non-degeneracy level")->capture_default_str();
  idc->add_option("--other", io.other, "second mixture: report the greedy component matching");
  add_common(idc, io.out);
  idc->callback([&] {
    action = [&] {
      const json cfg{{"config", io.config}, {"coeffs", io.coeffs}, {"mu", io.mu}, {"other", io.other}};
      return run("identifiability", cfg, std::nullopt, 1, io.out, [&](ExperimentRecord& rec) {
        const auto mix = load_mixture(io.config);
        auto z = io.coeffs;
        if (z.empty())
          for (int i = 0; i < mix.k(); ++i) z.push_back(i % 2 == 0 ? 1.0 : -1.0);
        const auto r = identifiability_l1(mix.components, z, io.mu);
        rec.results()["l1"] = r.l1;
        rec.results()["log10_bound"] = r.log10_bound;
        rec.results()["min_pairwise_tv"] = r.nondegeneracy.min_pairwise_tv;
        rec.results()["min_tv_to_uniform"] = r.nondegeneracy.min_tv_to_uniform;
        rec.expect("log10 l1", "identifiability-l1", std::log10(r.l1), ">=", r.log10_bound);
        if (!io.other.empty()) {
          const auto m = match_components(mix, load_mixture(io.other));
          json ms = json::array();
          for (const auto& c : m.matches)
            ms.push_back({{"left", c.left}, {"right", c.right}, {"tv", c.tv}, {"weight_gap", c.weight_gap},
                          {"phi_gap", c.phi_gap}});
          rec.results()["matching"] = {{"mixture_l1", m.mixture_l1}, {"matches", ms}};
        }
      });
    };
  });

  // learn-general -----------------------------------------------------------
  struct {
    std::string config, mode = "exact", out = "-";
    std::size_t samples = 100000, trials = 1, max_paths = 12;
    int k = 0, order = 0;
    double beta = 0.05, alpha = 0.1, mu = 0.05, theta = 0.05, assert_tol = -1.0;
    std::uint64_t seed = 0;
    int workers = 1;
  } lg;
  auto* lgc = app.add_subcommand("learn-general", "learn a mixture from exact or sampled moments");
  lgc->add_option("--config", lg.config, "true mixture config")->required();
  lgc->add_option("--mode", lg.mode, "exact | sampled")->check(CLI::IsMember({"exact", "sampled"}))->capture_default_str();
  lgc->add_option("--samples", lg.samples, "draws in sampled mode")->capture_default_str();
  lgc->add_option("--k", lg.k, "number of components (default: the config's)");
  lgc->add_option("--trials", lg.trials, "independent sampled trials")->capture_default_str();
  lgc->add_option("--beta", lg.beta, "phi grid step")->capture_default_str();
  lgc->add_option("--alpha", lg.alpha, "weight floor")->capture_default_str();
  lgc->add_option("--mu", lg.mu, "separation level")->capture_default_str();
  lgc->add_option("--theta", lg.theta, "target accuracy")->capture_default_str();
  lgc->add_option("--order", lg.order, "moment order (0: min(10k^2, n))")->capture_default_str();
  lgc->add_option("--max-paths", lg.max_paths, "tuples refined and tested")->capture_default_str();
  lgc->add_option("--assert-tol", lg.assert_tol, "assert exact centres and phi/weight gaps within this value");
  add_common(lgc, lg.out, &lg.workers, &lg.seed);
  lgc->callback([&] {
    action = [&] {
      const bool sampled = lg.mode == "sampled";
      const json cfg{{"config", lg.config}, {"mode", lg.mode}, {"samples", sampled ? lg.samples : 0},
                     {"k", lg.k}, {"trials", sampled ? lg.trials : 1}, {"beta", lg.beta}, {"alpha", lg.alpha},
                     {"mu", lg.mu}, {"theta", lg.theta}, {"order", lg.order}, {"max_paths", lg.max_paths},
                     {"assert_tol", lg.assert_tol}};
      return run("learn-general", cfg, sampled ? std::optional(lg.seed) : std::nullopt, lg.workers, lg.out,
                 [&](ExperimentRecord& rec) {
        const auto truth = load_mixture(lg.config);
        const int k = lg.k > 0 ? lg.k : truth.k();
        LearnerBudget b;
        b.beta = lg.beta;
        b.alpha = lg.alpha;
        b.mu = lg.mu;
        b.theta = lg.theta;
        b.moment_order = lg.order;
        b.max_paths = lg.max_paths;
        const std::size_t trials = sampled ? lg.trials : 1;
        b.workers = trials > 1 ? 1 : lg.workers;
        const auto results = run_trials(trials, trials > 1 ? lg.workers : 1, lg.seed, "learn-general",
                                        [&](std::size_t, std::uint64_t s) {
          LearnerBudget bt = b;
          bt.seed = s;
          const auto data = sampled ? PlacementOracle::empirical(sample_mixture(truth, lg.samples, s).perms, b.delta)
                                    : PlacementOracle::exact(truth);
          return learn_mixture_general(data, k, bt);
        });
        json tj = json::array();
        for (std::size_t t = 0; t < results.size(); ++t) {
          const auto& r = results[t];
          json tuples = json::array();
          for (const auto& tu : r.tuples)
            tuples.push_back({{"mixture", mixture_to_json(tu.mixture)}, {"path_residual", tu.path_residual},
                              {"fit_residual", tu.fit_residual}, {"eliminated", tu.eliminated},
                              {"test", to_json(tu.test)}});
          const auto cmp = compare_to_truth(truth, r.mixture);
          tj.push_back({{"mixture", mixture_to_json(r.mixture)}, {"statistic", r.statistic},
                        {"threshold", r.threshold}, {"residual_l1", r.residual_l1},
                        {"candidate_count", r.candidate_count}, {"path_count", r.path_count},
                        {"small_phi_list", r.small_phi_list.size()}, {"tuples", tuples},
                        {"diagnostics", {{"configurations", r.diagnostics.configurations},
                                         {"guesses", r.diagnostics.guesses}, {"ties", r.diagnostics.ties},
                                         {"recovery_failures", r.diagnostics.recovery_failures},
                                         {"degenerate_guesses", r.diagnostics.degenerate_guesses}}},
                        {"truth", cmp}});
          const std::string tag = "trial " + std::to_string(t);
          rec.expect(tag + " statistic", "componentwise-close-test", r.statistic, "<=", r.threshold);
          if (lg.assert_tol >= 0.0) {
            rec.expect_true(tag + " centres", "exact-centres", cmp["centers_exact"].get<bool>());
            if (cmp.contains("max_phi_gap")) {
              rec.expect(tag + " phi gap", "parameter-accuracy", cmp["max_phi_gap"].get<double>(), "<=", lg.assert_tol);
              rec.expect(tag + " weight gap", "parameter-accuracy", cmp["max_weight_gap"].get<double>(), "<=", lg.assert_tol);
            }
          }
        }
        rec.results()["truth"] = mixture_to_json(truth);
        rec.results()["trials"] = tj;
      });
    };
  });

  // learn-separated ---------------------------------------------------------
  struct {
    std::string config, mode = "sampled", out = "-";
    std::size_t samples = 100000, trials = 1, max_centers = 400, max_tests = 64;
    int k = 0, prefix_len = 0;
    double gamma = 0.2, alpha = 0.1, theta = 0.02, beta = 0.05, assert_tol = -1.0;
    std::uint64_t seed = 0;
    int workers = 1;
  } ls;
  auto* lsc = app.add_subcommand("learn-separated", "learn a separated mixture from prefix statistics");
  lsc->add_option("--config", ls.config, "true mixture config")->required();
  lsc->add_option("--mode", ls.mode, "sampled | exact")->check(CLI::IsMember({"exact", "sampled"}))->capture_default_str();
  lsc->add_option("--samples", ls.samples, "draws per trial in sampled mode")->capture_default_str();
  lsc->add_option("--k", ls.k, "number of components (default: the config's)");
  lsc->add_option("--trials", ls.trials, "independent sampled trials")->capture_default_str();
  lsc->add_option("--prefix-len", ls.prefix_len, "prefix length (0: min(10k, n/2))")->capture_default_str();
  lsc->add_option("--gamma", ls.gamma, "phi separation")->capture_default_str();
  lsc->add_option("--alpha", ls.alpha, "weight floor")->capture_default_str();
  lsc->add_option("--theta", ls.theta, "target accuracy")->capture_default_str();
  lsc->add_option("--beta", ls.beta, "phi grid step")->capture_default_str();
  lsc->add_option("--max-centers", ls.max_centers, "centre list cap")->capture_default_str();
  lsc->add_option("--max-tests", ls.max_tests, "candidates refined and tested")->capture_default_str();
  lsc->add_option("--assert-tol", ls.assert_tol, "assert exact centres and phi/weight gaps within this value");
  add_common(lsc, ls.out, &ls.workers, &ls.seed);
  lsc->callback([&] {
    action = [&] {
      const bool sampled = ls.mode == "sampled";
      const json cfg{{"config", ls.config}, {"mode", ls.mode}, {"samples", sampled ? ls.samples : 0}, {"k", ls.k},
                     {"trials", sampled ? ls.trials : 1}, {"prefix_len", ls.prefix_len}, {"gamma", ls.gamma},
                     {"alpha", ls.alpha}, {"theta", ls.theta}, {"beta", ls.beta},
                     {"max_centers", ls.max_centers}, {"max_tests", ls.max_tests}, {"assert_tol", ls.assert_tol}};
      return run("learn-separated", cfg, sampled ? std::optional(ls.seed) : std::nullopt, ls.workers, ls.out,
                 [&](ExperimentRecord& rec) {
        const auto truth = load_mixture(ls.config);
        const int k = ls.k > 0 ? ls.k : truth.k();
        SeparationParams p;
        p.gamma = ls.gamma;
        p.alpha = ls.alpha;
        p.theta = ls.theta;
        p.beta = ls.beta;
        p.prefix_len = ls.prefix_len;
        p.max_centers = ls.max_centers;
        p.max_tests = ls.max_tests;
        const std::size_t trials = sampled ? ls.trials : 1;
        p.workers = trials > 1 ? 1 : ls.workers;
        const auto results = run_trials(trials, trials > 1 ? ls.workers : 1, ls.seed, "learn-separated",
                                        [&](std::size_t, std::uint64_t s) {
          SeparationParams pt = p;
          pt.seed = s;
          const auto data = sampled ? PlacementOracle::empirical(sample_mixture(truth, ls.samples, s).perms, p.delta)
                                    : PlacementOracle::exact(truth);
          return learn_mixture_separated(data, k, pt);
        });
        json tj = json::array();
        for (std::size_t t = 0; t < results.size(); ++t) {
          const auto& r = results[t];
          const auto cmp = compare_to_truth(truth, r.mixture);
          json tested = json::array();
          for (const auto& c : r.tested)
            tested.push_back({{"mixture", mixture_to_json(c.mixture)}, {"score", c.score}, {"test", to_json(c.test)}});
          tj.push_back({{"mixture", mixture_to_json(r.mixture)}, {"raw_weights", r.raw_weights},
                        {"test", to_json(r.test)}, {"prefix_count", r.prefix_count},
                        {"head_count", r.head_count}, {"center_count", r.center_count},
                        {"tuple_count", r.tuple_count}, {"recovery_failures", r.recovery_failures},
                        {"tested", tested}, {"truth", cmp}});
          const std::string tag = "trial " + std::to_string(t);
          rec.expect_true(tag + " accepted", "separated-close-test", r.test.accept);
          if (ls.assert_tol >= 0.0) {
            rec.expect_true(tag + " centres", "exact-centres", cmp["centers_exact"].get<bool>());
            if (cmp.contains("max_phi_gap")) {
              rec.expect(tag + " phi gap", "parameter-accuracy", cmp["max_phi_gap"].get<double>(), "<=", ls.assert_tol);
              rec.expect(tag + " weight gap", "parameter-accuracy", cmp["max_weight_gap"].get<double>(), "<=", ls.assert_tol);
            }
          }
        }
        rec.results()["truth"] = mixture_to_json(truth);
        rec.results()["trials"] = tj;
      });
    };
  });

  // lowerbound build | verify -----------------------------------------------
  struct {
    int k = 2, n = 7;
    double mu = 0.01;
    std::string variant = "k", out = "-";
  } lb;
  auto* lbc = app.add_subcommand("lowerbound", "close-mixtures construction");
  lbc->require_subcommand(1);
  for (const char* what : {"build", "verify"}) {
    auto* sc = lbc->add_subcommand(what, std::string(what) + " the close pair");
    sc->add_option("--k", lb.k, "component parameter")->capture_default_str();
    sc->add_option("--mu", lb.mu, "separation level")->capture_default_str();
    sc->add_option("--n", lb.n, "permutation length")->capture_default_str();
    sc->add_option("--variant", lb.variant, "k | 2k")->check(CLI::IsMember({"k", "2k"}))->capture_default_str();
    add_common(sc, lb.out);
    const bool verify = std::string(what) == "verify";
    sc->callback([&, verify] {
      action = [&, verify] {
        const json cfg{{"k", lb.k}, {"mu", lb.mu}, {"n", lb.n}, {"variant", lb.variant}};
        return run(verify ? "lowerbound verify" : "lowerbound build", cfg, std::nullopt, 1, lb.out,
                   [&](ExperimentRecord& rec) {
          const auto pair = build_close_mixtures(lb.k, lb.mu, lb.n, parse_variant(lb.variant));
          auto& r = rec.results();
          r["r"] = pair.r;
          r["lambda"] = pair.lambda;
          r["phis"] = pair.phis;
          r["coefficients"] = pair.coefficients;
          r["corrected"] = pair.corrected;
          r["corrected_index"] = pair.corrected_index;
          r["M"] = mixture_to_json(pair.M);
          r["M_prime"] = mixture_to_json(pair.Mp);
          r["claimed_tv_bound"] = pair.claimed_tv_bound;
          r["claimed_l1_bound"] = pair.claimed_l1_bound;
          r["weight_floor"] = pair.weight_floor;
          if (!verify) return;
          const auto v = verify_close_mixtures(pair);
          r["exact_tv"] = v.exact_tv;
          r["l1_norm"] = v.l1_norm;
          r["max_low_entry"] = v.max_low_entry;
          r["closed_form_gap"] = v.closed_form_gap;
          r["min_weight"] = v.min_weight;
          r["component_tv_matrix"] = matrix_json(v.component_tv_matrix);
          r["tv_to_uniform"] = v.tv_to_uniform;
          r["min_component_tv"] = v.min_component_tv;
          r["asymptotic_regime"] = v.asymptotic_regime;
          rec.expect("l1 norm", "close-combination-l1", v.l1_norm, "<=", v.l1_bound);
          rec.expect("exact tv", "close-pair-tv", v.exact_tv, "<=", v.tv_bound);
          rec.expect("entries at <= r-2 inversions", "low-inversion-zero", v.max_low_entry, "<=", 1e-13);
          rec.expect("min weight", "weight-floor", v.min_weight, ">=", v.weight_floor);
        });
      };
    });
  }

  // sql build | verify ------------------------------------------------------
  struct {
    int ell = 2, n = 8;
    double tau = 0.01;
    std::string out = "-";
  } sq;
  auto* sqc = app.add_subcommand("sql", "local-query hard instance");
  sqc->require_subcommand(1);
  for (const char* what : {"build", "verify"}) {
    auto* sc = sqc->add_subcommand(what, std::string(what) + " the hard instance");
    sc->add_option("--ell", sq.ell, "number of blocks")->capture_default_str();
    sc->add_option("--n", sq.n, "permutation length (2 ell must divide it)")->capture_default_str();
    sc->add_option("--tau", sq.tau, "tolerance of the simulated adversarial query session")->capture_default_str();
    add_common(sc, sq.out);
    const bool verify = std::string(what) == "verify";
    sc->callback([&, verify] {
      action = [&, verify] {
        const json cfg{{"ell", sq.ell}, {"n", sq.n}, {"tau", sq.tau}};
        return run(verify ? "sql verify" : "sql build", cfg, std::nullopt, 1, sq.out, [&](ExperimentRecord& rec) {
          const auto h = build_sql_hard_instance(sq.ell, sq.n);
          auto& r = rec.results();
          r["k"] = h.k;
          r["phi"] = h.phi;
          r["M"] = mixture_to_json(h.M);
          r["M_prime"] = mixture_to_json(h.Mp);
          if (!verify) return;
          const auto v = verify_sql_instance(h);
          r["small_queries"] = v.small_queries;
          r["max_histogram_gap"] = v.max_histogram_gap;
          r["max_placement_prob"] = v.max_placement_prob;
          r["max_mixture_placement_prob"] = v.max_mixture_placement_prob;
          r["placement_cap"] = v.placement_cap;
          r["component_tv_matrix"] = matrix_json(v.component_tv_matrix);
          r["tv_to_uniform"] = v.tv_to_uniform;
          r["min_component_tv"] = v.min_component_tv;
          r["min_cross_tv"] = v.min_cross_tv;
          rec.expect("histogram gap on < ell elements", "sub-ell-indistinguishable",
                     static_cast<double>(v.max_histogram_gap), "==", 0.0);
          rec.expect("max ell-element placement", "placement-cap", v.max_placement_prob, "<=", v.placement_cap);
          r["min_tv_to_uniform"] = v.min_tv_to_uniform;
          rec.expect_true("components separated", "positive-separation", v.nondegenerate);
          // Adversarial session: every single-element query at tolerance tau.
          LocalQueryOracle a(h.M, NoiseMode::adversarial_collapse, 0, h.Mp);
          LocalQueryOracle b(h.Mp, NoiseMode::adversarial_collapse, 0, h.M);
          std::size_t differ = 0;
          for (int e = 1; e <= h.n; ++e)
            for (int p = 1; p <= h.n; ++p) {
              const LocalQuery q{{{{e, p}}}, sq.tau};
              if (a.query(q) != b.query(q)) ++differ;
            }
          const mpq_class t = decimal_rational(sq.tau);
          const mpq_class expect = mpq_class(static_cast<unsigned long>(h.n) * h.n) / (t * t);
          r["session"] = {{"queries", a.ledger().size()}, {"distinguished", differ},
                          {"total_cost", a.ledger().total_cost()},
                          {"total_cost_exact", a.ledger().total_cost_string()}};
          if (h.ell > 1) rec.expect("distinguished single-element queries", "sub-ell-indistinguishable",
                                    static_cast<double>(differ), "==", 0.0);
          rec.expect_true("ledger total equals count / tau^2", "ledger-arithmetic",
                          a.ledger().total_cost_exact() == expect);
        });
      };
    });
  }

  // oracle-serve --------------------------------------------------------------
  struct {
    std::string config, backing = "exact", noise = "exact", ledger, port_file, out = "stderr";
    int port = 0;
    std::size_t samples = 100000;
    double max_seconds = 0.0;
    std::uint64_t seed = 0;
  } os;
  auto* osc = app.add_subcommand("oracle-serve", "answer placement queries over a local TCP socket");
  osc->add_option("--config", os.config, "mixture config")->required();
  osc->add_option("--port", os.port, "TCP port on 127.0.0.1 (0 picks a free one)")->check(CLI::Range(0, 65535))->capture_default_str();
  osc->add_option("--backing", os.backing, "exact | sampled")->check(CLI::IsMember({"exact", "sampled"}))->capture_default_str();
  osc->add_option("--samples", os.samples, "draws for sampled backing")->capture_default_str();
  osc->add_option("--noise", os.noise, "exact | uniform")->check(CLI::IsMember({"exact", "uniform"}))->capture_default_str();
  osc->add_option("--ledger", os.ledger, "write the query ledger (JSON) here on shutdown");
  osc->add_option("--port-file", os.port_file, "write the bound port number here once listening");
  osc->add_option("--max-seconds", os.max_seconds, "stop after this long (0: run until SIGINT/SIGTERM)");
  add_common(osc, os.out, nullptr, &os.seed);
  osc->callback([&] {
    action = [&] {
      const json cfg{{"config", os.config}, {"backing", os.backing}, {"noise", os.noise},
                     {"samples", os.backing == "sampled" ? os.samples : 0}};
      const bool random = os.backing == "sampled" || os.noise == "uniform";
      return run("oracle-serve", cfg, random ? std::optional(os.seed) : std::nullopt, 1, os.out,
                 [&](ExperimentRecord& rec) {
        const auto mix = load_mixture(os.config);
        OracleService svc(mix, os.backing == "exact" ? OracleService::Backing::exact : OracleService::Backing::sampled,
                          os.samples, os.seed, parse_noise_mode(os.noise));
        std::signal(SIGINT, on_signal);
        std::signal(SIGTERM, on_signal);
        std::thread timer;
        std::atomic<bool> done{false};
        if (os.max_seconds > 0.0)
          timer = std::thread([&] {
            const auto until = std::chrono::steady_clock::now() + std::chrono::duration<double>(os.max_seconds);
            while (!done.load() && std::chrono::steady_clock::now() < until)
              std::this_thread::sleep_for(std::chrono::milliseconds(20));
            g_stop.store(true);
          });
        int bound = -1;
        serve(svc, os.port, g_stop, [&](int p) {
          bound = p;
          std::cerr << "listening on 127.0.0.1:" << p << std::endl;
          if (!os.port_file.empty()) {
            const std::string tmp = os.port_file + ".tmp";
            std::ofstream(tmp) << p << "\n";
            std::rename(tmp.c_str(), os.port_file.c_str());
          }
        });
        done.store(true);
        if (timer.joinable()) timer.join();
        const json ledger = svc.ledger_json();
        if (!os.ledger.empty()) std::ofstream(os.ledger) << ledger.dump(2) << "\n";
        rec.results()["port"] = bound;
        rec.results()["queries"] = ledger["count"];
        rec.results()["total_cost"] = ledger["total_cost"];
        rec.results()["total_cost_exact"] = ledger["total_cost_exact"];
      });
    };
  });

  CLI11_PARSE(app, argc, argv);
  return action ? action() : 2;
}
