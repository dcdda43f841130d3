#include "vqc/report.hpp"

#include <cmath>
#include <cstdio>
#include <fstream>
#include <sstream>

#include "vqc/errors.hpp"

namespace vqc {

namespace {

std::string fmt(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.17g", v);
  return buf;
}

double parse_double(const std::string& field) {
  if (field == "nan") return std::nan("");
  std::size_t used = 0;
  const double v = std::stod(field, &used);
  if (used != field.size()) throw std::invalid_argument(field);
  return v;
}

std::uint64_t parse_uint(const std::string& field) {
  std::size_t used = 0;
  const unsigned long long v = std::stoull(field, &used);
  if (used != field.size()) throw std::invalid_argument(field);
  return v;
}

}  // namespace

ReportRow make_report_row(const std::string& experiment, const std::string& arm, std::uint64_t seed,
                          std::uint64_t sweep_value, const CollapseReport& r) {
  ReportRow row;
  row.experiment = experiment;
  row.arm = arm;
  row.seed = seed;
  row.sweep_value = sweep_value;
  row.recon_mse = r.test_mse;
  row.perplexity = r.codebook_perplexity;
  row.entropy_ratio = r.allocation_entropy_ratio;
  row.mode_coverage = r.mode_coverage;
  row.ood_fraction = r.ood_fraction;
  row.dead_token_fraction = r.dead_token_fraction;
  return row;
}

std::string format_report_row(const ReportRow& row) {
  std::ostringstream os;
  os << row.experiment << ',' << row.arm << ',' << row.seed << ',' << row.sweep_value << ','
     << row.checkpoint << ',' << fmt(row.recon_mse) << ',' << fmt(row.perplexity) << ','
     << fmt(row.entropy_ratio) << ',' << fmt(row.mode_coverage) << ',' << fmt(row.ood_fraction)
     << ',' << fmt(row.dead_token_fraction);
  return os.str();
}

ReportRow parse_report_row(const std::string& line) {
  std::vector<std::string> fields;
  std::stringstream ss(line);
  std::string f;
  while (std::getline(ss, f, ',')) fields.push_back(f);
  if (!line.empty() && line.back() == ',') fields.emplace_back();
  if (fields.size() != 11) {
    throw IoError("report row has " + std::to_string(fields.size()) + " fields, expected 11");
  }
  try {
    ReportRow row;
    row.experiment = fields[0];
    row.arm = fields[1];
    row.seed = parse_uint(fields[2]);
    row.sweep_value = parse_uint(fields[3]);
    row.checkpoint = fields[4];
    row.recon_mse = parse_double(fields[5]);
    row.perplexity = parse_double(fields[6]);
    row.entropy_ratio = parse_double(fields[7]);
    row.mode_coverage = parse_double(fields[8]);
    row.ood_fraction = parse_double(fields[9]);
    row.dead_token_fraction = parse_double(fields[10]);
    return row;
  } catch (const std::invalid_argument&) {
    throw IoError("malformed report row: " + line);
  } catch (const std::out_of_range&) {
    throw IoError("out-of-range value in report row: " + line);
  }
}

std::vector<ReportRow> read_report(const std::filesystem::path& path) {
  std::ifstream in(path);
  if (!in) throw IoError("cannot open report " + path.string());
  std::string line;
  if (!std::getline(in, line) || line != kReportHeader) {
    throw IoError("report " + path.string() + " has an unexpected header");
  }
  std::vector<ReportRow> rows;
  while (std::getline(in, line)) {
    if (!line.empty()) rows.push_back(parse_report_row(line));
  }
  return rows;
}

void write_report(const std::filesystem::path& path, const std::vector<ReportRow>& rows) {
  std::ofstream out(path, std::ios::trunc);
  if (!out) throw IoError("cannot write report " + path.string());
  out << kReportHeader << '\n';
  for (const auto& row : rows) out << format_report_row(row) << '\n';
  if (!out) throw IoError("write failed for " + path.string());
}

ReportAppender::ReportAppender(std::filesystem::path path) : path_(std::move(path)) {}

void ReportAppender::append(const ReportRow& row) {
  std::lock_guard lock(mutex_);
  const bool fresh = !std::filesystem::exists(path_) || std::filesystem::file_size(path_) == 0;
  std::ofstream out(path_, std::ios::app);
  if (!out) throw IoError("cannot append to " + path_.string());
  if (fresh) out << kReportHeader << '\n';
  out << format_report_row(row) << '\n';
}

std::string paired_winner(const ReportRow& baseline, const ReportRow& remedy) {
  if (remedy.recon_mse < baseline.recon_mse && remedy.perplexity > baseline.perplexity) return "remedy";
  if (baseline.recon_mse < remedy.recon_mse && baseline.perplexity > remedy.perplexity) return "baseline";
  return "mixed";
}

std::string format_summary_row(const PairedSummary& s) {
  std::ostringstream os;
  os << s.experiment << ',' << s.seed << ',' << s.sweep_value << ',' << fmt(s.baseline_init_perplexity)
     << ',' << fmt(s.remedy_init_perplexity) << ',' << fmt(s.baseline.perplexity) << ','
     << fmt(s.remedy.perplexity) << ',' << fmt(s.baseline.recon_mse) << ',' << fmt(s.remedy.recon_mse)
     << ',' << fmt(s.baseline.entropy_ratio) << ',' << fmt(s.remedy.entropy_ratio) << ',' << s.winner;
  return os.str();
}

}  // namespace vqc
