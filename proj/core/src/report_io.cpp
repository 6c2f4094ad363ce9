#include "gradmask/report_io.hpp"

#include <cstdio>
#include <filesystem>
#include <fstream>

#include "gradmask/version.hpp"

namespace gradmask {

std::string format_double(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return std::string(buf);
}

std::string csv_cell(double v) { return format_double(v); }

void atomic_write(const std::string& path, const std::string& content) {
  const std::string tmp = path + ".tmp";
  {
    std::ofstream f(tmp, std::ios::binary | std::ios::trunc);
    if (!f) throw IoError("cannot open '" + tmp + "' for writing");
    f.write(content.data(), static_cast<std::streamsize>(content.size()));
    if (!f) throw IoError("write failed for '" + tmp + "'");
  }
  std::filesystem::rename(tmp, path);
}

void write_json(const std::string& path, const nlohmann::json& j) {
  atomic_write(path, j.dump(2) + "\n");
}

std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows) {
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out += ",";
    out += header[i];
  }
  out += "\n";
  for (const auto& row : rows) {
    for (std::size_t i = 0; i < row.size(); ++i) {
      if (i) out += ",";
      out += row[i];
    }
    out += "\n";
  }
  return out;
}

std::string eps_tag(const std::optional<double>& eps) {
  if (!eps.has_value()) return "na";
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.9g", *eps);
  std::string s(buf);
  for (char& c : s)
    if (c == '.') c = 'p';
  return s;
}

nlohmann::json to_json(const MetricReport& r) {
  nlohmann::json j;
  j["metric"] = r.metric;
  if (r.epsilon.has_value())
    j["epsilon"] = *r.epsilon;
  else
    j["epsilon"] = nullptr;
  j["split"] = to_string(r.split);
  j["model_id"] = r.model_id;
  j["config_digest"] = r.config_digest;
  j["tool_version"] = kVersion;
  j["n"] = r.n;
  j["excluded"] = r.excluded;
  j["mean"] = r.mean;
  j["std"] = r.stddev;
  j["per_example"] = r.per_example;
  return j;
}

nlohmann::json to_json(const GapQuantities& g) {
  return {{"epsilon", g.epsilon},
          {"fgsm_acc", g.fgsm_acc},
          {"pgd_acc", g.pgd_acc},
          {"strong_acc", g.strong_acc},
          {"strong_attack", "pgd(iters=50,restarts=10,rel_step=0.1)"},
          {"fgsm_minus_strong", g.fgsm_minus_strong},
          {"fgsm_minus_pgd", g.fgsm_minus_pgd}};
}

nlohmann::json to_json(const ChecklistReport& r) {
  nlohmann::json j;
  j["blackbox_beats_whitebox"] = {{"flag", r.blackbox_beats_whitebox.flag},
                                  {"spsa_acc", r.blackbox_beats_whitebox.spsa_acc},
                                  {"fgsm_acc", r.blackbox_beats_whitebox.fgsm_acc},
                                  {"pgd_acc", r.blackbox_beats_whitebox.pgd_acc},
                                  {"epsilon", r.blackbox_beats_whitebox.epsilon}};
  j["unbounded_not_total"] = {{"flag", r.unbounded_not_total.flag},
                              {"unbounded_acc", r.unbounded_not_total.unbounded_acc}};
  j["distortion_non_monotone"] = {{"flag", r.distortion_non_monotone.flag},
                                  {"epsilons", r.distortion_non_monotone.epsilons},
                                  {"fgsm_acc_by_eps", r.distortion_non_monotone.fgsm_acc_by_eps}};
  j["single_vs_strong_gap"] = to_json(r.single_vs_strong_gap);
  j["overall_suspect"] = r.overall_suspect;
  j["errors"] = r.errors;
  j["tool_version"] = kVersion;
  return j;
}

nlohmann::json to_json(const CrossSection& cs) {
  nlohmann::json j;
  j["t_grid"] = cs.t_grid;
  j["mean_curve"] = cs.mean_curve;
  j["std_curve"] = cs.std_curve;
  auto b = nlohmann::json::array();
  for (const auto& v : cs.boundary) {
    if (v.has_value())
      b.push_back(*v);
    else
      b.push_back(nullptr);
  }
  j["boundary"] = b;
  j["boundary_mean"] = cs.boundary_mean.has_value() ? nlohmann::json(*cs.boundary_mean)
                                                    : nlohmann::json(nullptr);
  j["boundary_std"] =
      cs.boundary_std.has_value() ? nlohmann::json(*cs.boundary_std) : nlohmann::json(nullptr);
  j["per_example"] = cs.per_example;
  j["tool_version"] = kVersion;
  return j;
}

nlohmann::json to_json(const CorrelationMatrix& cm) {
  nlohmann::json j;
  j["labels"] = cm.labels;
  j["metric_count"] = cm.metric_count;
  auto rows = nlohmann::json::array();
  for (const auto& row : cm.pearson_r) {
    auto jr = nlohmann::json::array();
    for (const auto& v : row) {
      if (v.has_value())
        jr.push_back(*v);
      else
        jr.push_back(nullptr);  // undefined marker for zero-variance columns
    }
    rows.push_back(jr);
  }
  j["pearson"] = rows;
  j["tool_version"] = kVersion;
  return j;
}

nlohmann::json train_report_to_json(const TrainReport& r) {
  nlohmann::json j;
  j["clean_accuracy"] = r.clean_accuracy;
  j["fgsm_accuracy"] = r.fgsm_accuracy;
  j["pgd_accuracy"] = r.pgd_accuracy;
  j["co_detected"] = r.co_detected;
  j["final_loss"] = r.final_loss;
  j["provenance"] = r.model.provenance;
  if (r.clip_threshold_used > 0.0) j["clip_threshold_used"] = r.clip_threshold_used;
  j["tool_version"] = kVersion;
  return j;
}

std::string cross_section_csv(const CrossSection& cs) {
  std::vector<std::vector<std::string>> rows;
  const std::string bm =
      cs.boundary_mean.has_value() ? format_double(*cs.boundary_mean) : std::string("");
  const std::string bs =
      cs.boundary_std.has_value() ? format_double(*cs.boundary_std) : std::string("");
  for (std::size_t i = 0; i < cs.t_grid.size(); ++i) {
    rows.push_back({format_double(cs.t_grid[i]), format_double(cs.mean_curve[i]),
                    format_double(cs.std_curve[i]), bm, bs});
  }
  return csv_table({"t", "mean_loss", "std_loss", "boundary_mean", "boundary_std"}, rows);
}

}  // namespace gradmask
