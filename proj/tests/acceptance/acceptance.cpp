// Acceptance suite: one PASS/FAIL/SKIP line per criterion, then INFO lines
// with the measured numbers. Exit status is nonzero iff a blocking
// criterion fails. Tolerances are fixed here, not configurable.

#include <algorithm>
#include <chrono>
#include <cmath>
#include <cstdio>
#include <cstdlib>
#include <filesystem>
#include <map>
#include <random>
#include <sstream>
#include <string>
#include <thread>
#include <vector>

#include "lbfl/lbfl.hpp"
#include "oracles.hpp"

namespace fs = std::filesystem;
using lbfl::json;

namespace {

using Clock = std::chrono::steady_clock;

double seconds_since(Clock::time_point t0) { return std::chrono::duration<double>(Clock::now() - t0).count(); }

struct Verdict {
  std::string id;
  std::string name;
  std::string status;  // PASS, FAIL, SKIP
  bool blocking = true;
  std::string detail;
};

std::vector<Verdict> verdicts;
std::vector<std::string> info;

void record(std::string id, std::string name, bool ok, std::string detail, bool blocking = true) {
  verdicts.push_back({std::move(id), std::move(name), ok ? "PASS" : "FAIL", blocking, std::move(detail)});
}

std::string fmt(const char* f, double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, f, v);
  return buf;
}

bool rel_close(double a, double b, double tol) {
  if (a == b) return true;
  return std::abs(a - b) <= tol * std::max(std::abs(a), std::abs(b));
}

// ---------------------------------------------------------------------------
// 1. Aggregators against brute-force loop oracles.

void criterion_aggregator_oracles() {
  const auto t0 = Clock::now();
  std::mt19937_64 gen(20240601);
  std::uniform_int_distribution<std::size_t> n_dist(3, 12), d_dist(1, 8);
  std::uniform_real_distribution<double> beta_dist(0.0, 0.5);
  std::size_t mismatches = 0;
  std::string first;
  auto miss = [&](const std::string& what) {
    if (mismatches++ == 0) first = what;
  };

  for (int inst = 0; inst < 500; ++inst) {
    const std::size_t n = n_dist(gen), d = d_dist(gen);
    // Every other instance is integer-valued so ties are exercised.
    const auto subs = oracle::random_submissions(gen, n, d, inst % 2 == 1);

    const double beta = beta_dist(gen);
    const auto tm = lbfl::agg_trimmed_mean(subs, beta).model;
    const auto tm_ref = oracle::trimmed_mean(subs, beta);
    for (std::size_t j = 0; j < d; ++j) {
      if (!rel_close(tm[j], tm_ref[j], 1e-12)) miss("trimmed_mean instance " + std::to_string(inst));
    }

    if (lbfl::agg_median(subs).model.values() != oracle::median(subs)) miss("median instance " + std::to_string(inst));

    const std::size_t f = std::uniform_int_distribution<std::size_t>(0, n - 3)(gen);
    const auto scores = lbfl::krum_scores(subs, f);
    const auto scores_ref = oracle::krum_scores(subs, f);
    for (std::size_t i = 0; i < n; ++i) {
      if (!rel_close(scores[i], scores_ref[i], 1e-12)) miss("krum score instance " + std::to_string(inst));
    }
    const auto krum = lbfl::agg_krum(subs, f);
    const auto krum_ref = oracle::multi_krum(subs, f, 1);
    if (krum.report.selected_ids != krum_ref.first || krum.model.values() != subs[krum_ref.first[0]].model.values()) {
      miss("krum selection instance " + std::to_string(inst));
    }

    const std::size_t k = std::uniform_int_distribution<std::size_t>(1, n - f - 2)(gen);
    const auto mk = lbfl::agg_multi_krum(subs, f, k);
    const auto mk_ref = oracle::multi_krum(subs, f, k);
    if (mk.report.selected_ids != mk_ref.first) miss("multi_krum selection instance " + std::to_string(inst));
    for (std::size_t j = 0; j < d; ++j) {
      if (!rel_close(mk.model[j], mk_ref.second[j], 1e-12)) miss("multi_krum average instance " + std::to_string(inst));
    }
  }
  const double secs = seconds_since(t0);
  record("1", "aggregator oracle equivalence", mismatches == 0 && secs < 10.0,
         "500 instances, " + std::to_string(mismatches) + " mismatches" + (first.empty() ? "" : " (first: " + first + ")") +
             ", " + fmt("%.2f s", secs));
}

// ---------------------------------------------------------------------------
// 2. 2-means split.

void criterion_two_means() {
  std::mt19937_64 gen(77);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  std::uniform_int_distribution<std::size_t> count(1, 10);
  std::size_t wrong = 0;
  for (int inst = 0; inst < 1000; ++inst) {
    const double scale = std::pow(10.0, 4.0 * u(gen) - 2.0);
    const double origin = 10.0 * scale * u(gen);
    const double spread = scale * (0.01 + u(gen));
    const double gap = spread * (3.0 + 1e-3 + 5.0 * u(gen));
    std::vector<double> v;
    const auto n_low = count(gen), n_high = count(gen);
    for (std::size_t i = 0; i < n_low; ++i) v.push_back(origin + spread * u(gen));
    for (std::size_t i = 0; i < n_high; ++i) v.push_back(origin + spread + gap + spread * u(gen));
    std::shuffle(v.begin(), v.end(), gen);
    if (lbfl::two_means_split(v).low != oracle::best_threshold_split(v)) ++wrong;
  }

  // Degenerate cases.
  const double nan = std::numeric_limits<double>::quiet_NaN(), inf = std::numeric_limits<double>::infinity();
  std::vector<std::string> bad;
  const auto eq = lbfl::two_means_split(std::vector<double>(6, 0.42));
  if (eq.low != lbfl::IndexSet{0, 1, 2, 3, 4, 5} || !eq.high.empty()) bad.push_back("all-equal");
  const auto single = lbfl::two_means_split(std::vector<double>{nan, 1.5, inf});
  if (single.low != lbfl::IndexSet{1} || single.high != lbfl::IndexSet{0, 2}) bad.push_back("single-finite");
  const auto mixed = lbfl::two_means_split(std::vector<double>{0.1, -inf, 0.11, 5.0, nan});
  if (mixed.low != lbfl::IndexSet{0, 2} || mixed.high != lbfl::IndexSet{1, 3, 4}) bad.push_back("non-finite");
  try {
    lbfl::two_means_split(std::vector<double>{nan, inf});
    bad.push_back("all-non-finite");
  } catch (const lbfl::DefenseError&) {
  }

  std::string detail = std::to_string(1000 - wrong) + "/1000 match brute force";
  for (const auto& b : bad) detail += "; degenerate case wrong: " + b;
  record("2", "2-means split correctness", wrong == 0 && bad.empty(), detail);
}

// ---------------------------------------------------------------------------
// 3. Gradients against central finite differences.

void criterion_gradients() {
  std::mt19937_64 gen(3);
  std::uniform_int_distribution<std::size_t> dim(2, 12), cls(2, 6), hid(2, 10), rows(1, 24);
  double worst = 0.0;
  for (auto kind : {lbfl::ModelKind::logistic, lbfl::ModelKind::mlp}) {
    for (int pair = 0; pair < 20; ++pair) {
      lbfl::ModelSpec spec{kind, dim(gen), cls(gen), hid(gen), 0.05};
      const auto b = oracle::random_batch(gen, rows(gen), spec.input_dim, spec.num_classes);
      const auto p = oracle::random_params(gen, spec.param_count(), 0.5);
      const auto g = lbfl::grad(p, b, spec);
      std::uniform_int_distribution<std::size_t> pick(0, spec.param_count() - 1);
      for (int s = 0; s < 50; ++s) {
        const auto j = pick(gen);
        const double fd = oracle::finite_difference(p, b, spec, j, 1e-5);
        const double err = std::abs(g[j] - fd) / std::max({std::abs(g[j]), std::abs(fd), 1e-6});
        worst = std::max(worst, err);
      }
    }
  }
  record("3", "gradient correctness", worst < 1e-4, "max relative error " + fmt("%.3g", worst) + " (limit 1e-4)");
}

// ---------------------------------------------------------------------------
// Scenario shared by 4-7: synthetic blobs, N=10 with 5 malicious, T=30,
// attack at round 15, logistic regression.

json scenario_json(const std::string& aggregator, const std::string& attack, std::uint64_t seed) {
  json j;
  j["dataset"] = {{"kind", "synthetic"}, {"train_size", 5000}, {"test_size", 1000},
                  {"num_classes", 10},   {"input_dim", 20},    {"separation", 3.0}};
  j["model"] = {{"kind", "logistic"}};
  j["num_clients"] = 10;
  j["malicious_count"] = 5;
  j["rounds"] = 30;
  j["seed"] = seed;
  j["attack"] = {{"kind", attack}, {"start_round", 15}};
  j["aggregator"] = {{"kind", aggregator}};
  return j;
}

const std::vector<std::string> kAggregators{"mean", "trimmed_mean", "median", "krum", "multi_krum", "loss_cluster"};
const std::vector<std::string> kAttacks{"none", "sign_flip", "label_flip", "gaussian_noise"};
constexpr std::uint64_t kSeeds[] = {1, 2, 3};
constexpr std::size_t kStart = 15;

struct Run {
  std::string aggregator, attack;
  std::uint64_t seed = 0;
  lbfl::ExperimentConfig cfg;
  lbfl::ExperimentResult result;
};

std::size_t thread_count() { return std::max(1u, std::thread::hardware_concurrency()); }

void criterion_k1_invariant() {
  std::size_t checked = 0, violations = 0;
  std::vector<std::uint64_t> seeds{1, 2, 3, 4, 5};
  std::vector<std::size_t> per_seed_viol(seeds.size(), 0), per_seed_checked(seeds.size(), 0);
  lbfl::parallel_for(seeds.size(), thread_count(), [&](std::size_t s) {
    auto j = scenario_json("loss_cluster", "sign_flip", seeds[s]);
    j["aggregator"]["k_t_override"] = 1;
    const auto cfg = lbfl::parse_config_json(j);
    lbfl::run_experiment(cfg, [&](const lbfl::Simulation& sim, const lbfl::RoundReport& r) {
      if (r.round < kStart) return;
      ++per_seed_checked[s];
      double min_sub = std::numeric_limits<double>::infinity();
      for (const auto& m : sim.last_submissions()) min_sub = std::min(min_sub, sim.filter_loss(m));
      double honest = 0.0;
      std::size_t honest_n = 0;
      for (const auto& c : sim.clients()) {
        if (c.malicious) continue;
        honest += sim.filter_loss(sim.last_honest_models()[c.client_id]);
        ++honest_n;
      }
      honest /= static_cast<double>(honest_n);
      const double next = sim.filter_loss(sim.global_model());
      if (r.defense_failed || next != min_sub || !(min_sub <= honest)) ++per_seed_viol[s];
    });
  });
  for (std::size_t s = 0; s < seeds.size(); ++s) {
    checked += per_seed_checked[s];
    violations += per_seed_viol[s];
  }
  record("4", "K_t=1 minimum-loss invariant", violations == 0 && checked == 75,
         std::to_string(violations) + " violations over " + std::to_string(checked) + " post-attack rounds (5 seeds)");
}

void scenario_criteria() {
  const auto t0 = Clock::now();
  std::vector<Run> runs;
  for (const auto& agg : kAggregators) {
    for (const auto& atk : kAttacks) {
      for (auto seed : kSeeds) {
        Run r{agg, atk, seed, lbfl::parse_config_json(scenario_json(agg, atk, seed)), {}};
        runs.push_back(std::move(r));
      }
    }
  }
  // Sign flip in the update-delta form, for reference against the default.
  for (auto seed : kSeeds) {
    auto j = scenario_json("mean", "sign_flip", seed);
    j["attack"]["sign_flip_mode"] = "delta";
    runs.push_back({"mean", "sign_flip_delta", seed, lbfl::parse_config_json(j), {}});
  }
  lbfl::parallel_for(runs.size(), thread_count(), [&](std::size_t i) { runs[i].result = lbfl::run_experiment(runs[i].cfg); });
  const double secs = seconds_since(t0);

  std::map<std::pair<std::string, std::string>, double> acc;
  std::map<std::pair<std::string, std::string>, std::vector<double>> per_seed;
  for (const auto& r : runs) {
    per_seed[{r.aggregator, r.attack}].push_back(lbfl::post_attack_mean_accuracy(r.result.reports, kStart));
  }
  for (const auto& [key, v] : per_seed) {
    double s = 0.0;
    for (double x : v) s += x;
    acc[key] = s / static_cast<double>(v.size());
  }

  info.push_back("scenario grid: " + std::to_string(runs.size()) + " runs in " + fmt("%.1f s", secs));
  for (const auto& agg : kAggregators) {
    std::string line = "post-attack accuracy " + agg + ":";
    for (const auto& atk : kAttacks) line += " " + atk + "=" + fmt("%.4f", acc[{agg, atk}]);
    info.push_back(line);
  }
  info.push_back("post-attack accuracy mean under delta-form sign flip: " + fmt("%.4f", acc[{"mean", "sign_flip_delta"}]));

  // 5(a)
  const double lc_none = acc[{"loss_cluster", "none"}];
  bool a_ok = true;
  std::string a_detail = "no-attack " + fmt("%.4f", lc_none);
  for (const auto& atk : {"sign_flip", "label_flip", "gaussian_noise"}) {
    const double v = acc[{"loss_cluster", atk}];
    a_ok &= std::abs(v - lc_none) <= 0.03;
    a_detail += std::string(", ") + atk + " " + fmt("%.4f", v);
  }
  record("5a", "loss_cluster within 3 points of its no-attack run", a_ok, a_detail);

  // 5(b)
  const double mean_sf = acc[{"mean", "sign_flip"}];
  record("5b", "mean aggregation collapses under sign flip", mean_sf <= 0.15,
         "post-attack accuracy " + fmt("%.4f", mean_sf) + " (limit 0.15)");

  // 5(c)
  bool c_ok = true;
  std::string c_detail;
  for (const auto& atk : {"sign_flip", "label_flip", "gaussian_noise"}) {
    const double lc = acc[{"loss_cluster", atk}], med = acc[{"median", atk}], tm = acc[{"trimmed_mean", atk}];
    c_ok &= lc >= med && lc >= tm;
    c_detail += std::string(c_detail.empty() ? "" : "; ") + atk + ": loss_cluster " + fmt("%.4f", lc) + ", median " +
                fmt("%.4f", med) + ", trimmed_mean " + fmt("%.4f", tm);
  }
  record("5c", "loss_cluster >= median and trimmed mean under every attack", c_ok, c_detail);

  // 5(d), non-blocking
  const double mk_lf = acc[{"multi_krum", "label_flip"}], lc_lf = acc[{"loss_cluster", "label_flip"}];
  record("5d", "multi_krum under label flip >= 10 points below loss_cluster", mk_lf <= lc_lf - 0.10,
         "multi_krum " + fmt("%.4f", mk_lf) + ", loss_cluster " + fmt("%.4f", lc_lf) + " (non-blocking)", false);

  record("5t", "scenario runtime under 10 minutes", secs < 600.0, fmt("%.1f s", secs));

  // 6. Filtering precision under sign flip.
  std::size_t rounds = 0, clean = 0;
  for (const auto& r : runs) {
    if (r.aggregator != "loss_cluster" || r.attack != "sign_flip") continue;
    const auto& mal = r.result.malicious_ids;
    for (const auto& rep : r.result.reports) {
      if (rep.round < kStart) continue;
      ++rounds;
      bool any = rep.defense_failed;
      for (auto id : rep.selection.selected_ids) any |= std::binary_search(mal.begin(), mal.end(), id);
      if (!any) ++clean;
    }
  }
  const double precision = rounds == 0 ? 0.0 : static_cast<double>(clean) / static_cast<double>(rounds);
  record("6", "filtering precision", rounds > 0 && precision >= 0.95,
         std::to_string(clean) + "/" + std::to_string(rounds) + " post-attack rounds select no malicious client");

  // 7. Pre-attack rows identical to the no-attack run.
  auto rows_of = [](const Run& r) {
    std::vector<std::string> lines;
    std::istringstream in(lbfl::results_csv(r.cfg, r.result.reports));
    for (std::string l; std::getline(in, l);) lines.push_back(l);
    return lines;
  };
  std::map<std::tuple<std::string, std::string, std::uint64_t>, const Run*> index;
  for (const auto& r : runs) index[{r.aggregator, r.attack, r.seed}] = &r;
  std::size_t compared = 0, differing = 0;
  for (const auto& r : runs) {
    if (r.attack == "none") continue;
    const auto a = rows_of(r), b = rows_of(*index.at({r.aggregator, "none", r.seed}));
    for (std::size_t t = 0; t < kStart; ++t) {
      ++compared;
      if (a.at(2 + t) != b.at(2 + t)) ++differing;
    }
  }
  record("7", "pre-attack equivalence", differing == 0,
         std::to_string(differing) + " of " + std::to_string(compared) + " pre-attack rows differ from the clean run");
}

// ---------------------------------------------------------------------------
// 8. MNIST smoke test.

void criterion_mnist() {
  fs::path dir;
  if (const char* env = std::getenv("LBFL_MNIST_DIR")) dir = env;
  else dir = fs::path(LBFL_SOURCE_DIR) / "data" / "mnist";
  const auto train_images = dir / "train-images-idx3-ubyte", train_labels = dir / "train-labels-idx1-ubyte",
             test_images = dir / "t10k-images-idx3-ubyte", test_labels = dir / "t10k-labels-idx1-ubyte";
  for (const auto& p : {train_images, train_labels, test_images, test_labels}) {
    if (!fs::exists(p)) {
      verdicts.push_back({"8", "MNIST smoke test", "SKIP", false,
                          "IDX files not found under " + dir.string() + " (set LBFL_MNIST_DIR)"});
      return;
    }
  }
  auto config = [&](const std::string& attack) {
    auto j = scenario_json("loss_cluster", attack, 1);
    j["dataset"] = {{"kind", "idx"},
                    {"name", "mnist"},
                    {"train_images", train_images.string()},
                    {"train_labels", train_labels.string()},
                    {"test_images", test_images.string()},
                    {"test_labels", test_labels.string()}};
    return lbfl::parse_config_json(j);
  };
  const auto clean = lbfl::run_experiment(config("none"));
  const auto flipped = lbfl::run_experiment(config("sign_flip"));
  const double clean_final = clean.reports.back().centralized_accuracy;
  const double clean_post = lbfl::post_attack_mean_accuracy(clean.reports, kStart);
  const double flipped_post = lbfl::post_attack_mean_accuracy(flipped.reports, kStart);
  record("8", "MNIST smoke test", clean_final >= 0.90 && std::abs(flipped_post - clean_post) <= 0.03,
         "no-attack final accuracy " + fmt("%.4f", clean_final) + "; post-attack no-attack " + fmt("%.4f", clean_post) +
             " vs sign flip " + fmt("%.4f", flipped_post));
}

}  // namespace

int main() {
  const auto t0 = Clock::now();
  criterion_aggregator_oracles();
  criterion_two_means();
  criterion_gradients();
  criterion_k1_invariant();
  scenario_criteria();
  criterion_mnist();

  bool blocking_failure = false;
  for (const auto& v : verdicts) {
    std::printf("%s %-3s %s: %s\n", v.status.c_str(), v.id.c_str(), v.name.c_str(), v.detail.c_str());
    blocking_failure |= v.blocking && v.status == "FAIL";
  }
  for (const auto& line : info) std::printf("INFO %s\n", line.c_str());
  std::printf("INFO total %.1f s\n", seconds_since(t0));
  return blocking_failure ? 1 : 0;
}
