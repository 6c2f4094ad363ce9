#pragma once

#include <string>
#include <vector>

#include "gradmask/diagnostics.hpp"
#include "gradmask/metrics.hpp"
#include "gradmask/training.hpp"
#include "json.hpp"

namespace gradmask {

/// 17-significant-digit decimal, '.' separator: bit-exact across platforms.
std::string format_double(double v);

/// Write via temp file + rename so readers never observe partial output.
void atomic_write(const std::string& path, const std::string& content);

void write_json(const std::string& path, const nlohmann::json& j);

/// Rows of 17-significant-digit numbers under a header, '\n' line endings.
std::string csv_table(const std::vector<std::string>& header,
                      const std::vector<std::vector<std::string>>& rows);
std::string csv_cell(double v);

nlohmann::json to_json(const MetricReport& r);
nlohmann::json to_json(const GapQuantities& g);
nlohmann::json to_json(const ChecklistReport& r);
nlohmann::json to_json(const CrossSection& cs);
nlohmann::json to_json(const CorrelationMatrix& cm);
nlohmann::json train_report_to_json(const TrainReport& r);

/// Filename-safe epsilon tag ('.' replaced by 'p'; "na" when absent).
std::string eps_tag(const std::optional<double>& eps);

/// Plot-ready cross-section CSV: t, mean_loss, std_loss, boundary_mean, boundary_std.
std::string cross_section_csv(const CrossSection& cs);

}  // namespace gradmask
