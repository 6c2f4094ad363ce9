#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

namespace gradmask::cli {

// Exit codes shared by every subcommand.
inline constexpr int kOk = 0;
inline constexpr int kConfigError = 1;
inline constexpr int kRuntimeError = 2;
inline constexpr int kPartialFailure = 3;

struct GlobalOpts {
  std::string out_dir = "out";
  std::optional<std::uint64_t> seed;  // overrides the config seed when given
  int jobs = 1;
};

int cmd_train(const std::string& config_path, const GlobalOpts& g);
int cmd_attack(const std::string& model_path, const std::string& dataset_path,
               const std::string& kind, double epsilon, int iterations, double relative_step,
               int restarts, std::uint64_t seed, const std::string& split, std::size_t subset_n,
               const GlobalOpts& g);
int cmd_metrics(const std::string& model_path, const std::string& dataset_path,
                const std::vector<double>& epsilons, const std::string& split,
                std::size_t subset_n, const std::vector<std::string>& filter,
                const GlobalOpts& g);
int cmd_checklist(const std::string& model_path, const std::string& dataset_path,
                  const std::vector<double>& epsilons, const std::string& split,
                  std::size_t subset_n, const GlobalOpts& g);
int cmd_cross_section(const std::string& model_path, const std::string& dataset_path,
                      double t_max, std::size_t k, const std::string& split, std::size_t subset_n,
                      const GlobalOpts& g);
int cmd_zoo(const std::string& manifest_path, const GlobalOpts& g);
int cmd_zoo_write_default(const std::string& path, std::uint64_t seed);
int cmd_report(const std::string& bundle_dir);

}  // namespace gradmask::cli
