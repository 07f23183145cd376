#pragma once

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <string>
#include <vector>

#include <json.hpp>

#include "lbfl/config.hpp"
#include "lbfl/errors.hpp"
#include "lbfl/orchestrator.hpp"

namespace lbfl {

inline constexpr const char* kToolName = "lbfl";
inline constexpr const char* kToolVersion = "0.1.0";

/// %.17g: enough digits to round-trip any double.
inline std::string format_real(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

/// Per-round results as text: a '#' header line carrying version, config
/// hash and seed, a column-name line, then one comma-separated row per
/// round. selected_ids is space-separated inside its field; per-client
/// losses are left empty when the aggregator does not compute them.
inline std::string results_csv(const ExperimentConfig& cfg, const std::vector<RoundReport>& reports) {
  std::string out;
  out += "# " + std::string(kToolName) + " " + kToolVersion + " config_hash=" + hex64(config_hash(cfg)) +
         " seed=" + std::to_string(cfg.seed) + "\n";
  out += "round,accuracy,server_eval_loss,K_t,selected_ids,attack_active";
  for (std::size_t i = 0; i < cfg.num_clients; ++i) out += ",v_" + std::to_string(i);
  out += "\n";
  for (const auto& r : reports) {
    out += std::to_string(r.round);
    out += "," + format_real(r.centralized_accuracy);
    out += "," + format_real(r.server_eval_loss);
    out += "," + std::to_string(r.defense_failed ? 0 : r.selection.k_t);
    out += ",";
    if (!r.defense_failed) {
      for (std::size_t k = 0; k < r.selection.selected_ids.size(); ++k) {
        if (k > 0) out += " ";
        out += std::to_string(r.selection.selected_ids[k]);
      }
    }
    out += r.attack_active ? ",1" : ",0";
    for (std::size_t i = 0; i < cfg.num_clients; ++i) {
      out += ",";
      if (r.per_client_loss && i < r.per_client_loss->size()) out += format_real((*r.per_client_loss)[i]);
    }
    out += "\n";
  }
  return out;
}

/// Structured run summary. Contains nothing timing-dependent, so repeated
/// runs of one config serialize identically.
inline json run_summary(const ExperimentConfig& cfg, const ExperimentResult& result) {
  json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["config_hash"] = hex64(config_hash(cfg));
  j["seed"] = cfg.seed;
  j["config"] = to_json(cfg);
  j["rounds"] = result.reports.size();
  j["malicious_ids"] = result.malicious_ids;
  const double post = post_attack_mean_accuracy(result.reports, cfg.attack.start_round);
  j["post_attack_mean_accuracy"] = std::isfinite(post) ? json(post) : json(nullptr);
  j["final_accuracy"] = result.reports.empty() ? json(nullptr) : json(result.reports.back().centralized_accuracy);

  json failed = json::array();
  std::size_t rounds_with_malicious = 0;
  for (const auto& r : result.reports) {
    if (r.defense_failed) failed.push_back(r.round);
    if (r.selection.per_coordinate || !r.attack_active) continue;
    for (auto id : r.selection.selected_ids) {
      if (std::binary_search(result.malicious_ids.begin(), result.malicious_ids.end(), id)) {
        ++rounds_with_malicious;
        break;
      }
    }
  }
  j["defense_failed_rounds"] = failed;
  j["attacked_rounds_selecting_malicious"] = rounds_with_malicious;
  return j;
}

inline std::string grid_summary_csv(const std::vector<GridRow>& rows) {
  std::string out = "defense,attack,dataset,mean,std,runs,status\n";
  for (const auto& r : rows) {
    out += r.defense + "," + r.attack + "," + r.dataset + ",";
    out += r.ok ? format_real(r.mean) + "," + format_real(r.stddev) : std::string(",");
    out += "," + std::to_string(r.run_means.size());
    out += r.ok ? ",ok\n" : ",failed\n";
  }
  return out;
}

inline json grid_summary_json(const std::vector<GridRow>& rows) {
  json arr = json::array();
  for (const auto& r : rows) {
    json row;
    row["defense"] = r.defense;
    row["attack"] = r.attack;
    row["dataset"] = r.dataset;
    row["ok"] = r.ok;
    row["run_means"] = r.run_means;
    row["mean"] = r.ok ? json(r.mean) : json(nullptr);
    row["std"] = r.ok ? json(r.stddev) : json(nullptr);
    if (!r.ok) row["error"] = r.error;
    arr.push_back(row);
  }
  json j;
  j["tool"] = kToolName;
  j["version"] = kToolVersion;
  j["rows"] = arr;
  return j;
}

/// Writes via a sibling temp file and rename, so readers never see a torn file.
inline void write_file_atomic(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw IoError("cannot write '" + tmp.string() + "'");
    out << content;
    out.flush();
    if (!out) throw IoError("write failed for '" + tmp.string() + "'");
  }
  std::error_code ec;
  std::filesystem::rename(tmp, path, ec);
  if (ec) {
    std::filesystem::remove(tmp);
    throw IoError("cannot rename '" + tmp.string() + "' to '" + path.string() + "': " + ec.message());
  }
}

}  // namespace lbfl
