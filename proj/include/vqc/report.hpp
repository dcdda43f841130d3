#pragma once

#include <cstdint>
#include <filesystem>
#include <mutex>
#include <string>
#include <vector>

#include "vqc/diagnostics.hpp"

namespace vqc {

/// Bumped whenever a column is added, removed or reordered.
inline constexpr int kReportSchemaVersion = 1;
inline constexpr const char* kReportHeader =
    "experiment,arm,seed,sweep_value,checkpoint,recon_mse,perplexity,entropy_ratio,mode_coverage,"
    "ood_fraction,dead_token_fraction";

struct ReportRow {
  std::string experiment;
  std::string arm;  // "baseline" or "remedy"
  std::uint64_t seed = 0;
  std::uint64_t sweep_value = 0;
  std::string checkpoint = "final";  // "final", an epoch number, or "diverged"
  double recon_mse = 0.0;
  double perplexity = 0.0;
  double entropy_ratio = 0.0;
  double mode_coverage = 0.0;
  double ood_fraction = 0.0;
  double dead_token_fraction = 0.0;

  friend bool operator==(const ReportRow&, const ReportRow&) = default;
};

ReportRow make_report_row(const std::string& experiment, const std::string& arm, std::uint64_t seed,
                          std::uint64_t sweep_value, const CollapseReport& report);

/// Doubles are printed with 17 significant digits so parse_report_row is lossless.
std::string format_report_row(const ReportRow& row);
ReportRow parse_report_row(const std::string& line);

std::vector<ReportRow> read_report(const std::filesystem::path& path);
void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows);

/// Appends rows to a CSV file from any thread; writes the header if the file is new.
class ReportAppender {
 public:
  explicit ReportAppender(std::filesystem::path path);
  void append(const ReportRow& row);

 private:
  std::filesystem::path path_;
  std::mutex mutex_;
};

inline constexpr const char* kSummaryHeader =
    "experiment,seed,sweep_value,baseline_init_perplexity,remedy_init_perplexity,"
    "baseline_perplexity,remedy_perplexity,baseline_mse,remedy_mse,baseline_entropy_ratio,"
    "remedy_entropy_ratio,winner";

struct PairedSummary {
  std::string experiment;
  std::uint64_t seed = 0;
  std::uint64_t sweep_value = 0;
  double baseline_init_perplexity = 0.0;
  double remedy_init_perplexity = 0.0;
  ReportRow baseline;
  ReportRow remedy;
  std::string winner;
};

/// "remedy" when the remedy has lower MSE and higher perplexity, "baseline" for the
/// mirror case, "mixed" otherwise.
std::string paired_winner(const ReportRow& baseline, const ReportRow& remedy);

std::string format_summary_row(const PairedSummary& s);

}  // namespace vqc
