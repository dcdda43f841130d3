#include <gtest/gtest.h>

#include <algorithm>
#include <cmath>
#include <filesystem>
#include <fstream>
#include <limits>
#include <random>
#include <thread>

#include "vqc/errors.hpp"
#include "vqc/report.hpp"

namespace fs = std::filesystem;
using vqc::ReportRow;

namespace {

ReportRow row(double mse, double ppl) {
  ReportRow r;
  r.experiment = "fixture";
  r.arm = "baseline";
  r.recon_mse = mse;
  r.perplexity = ppl;
  return r;
}

}  // namespace

TEST(Report, HeaderIsFixed) {
  EXPECT_STREQ(vqc::kReportHeader,
               "experiment,arm,seed,sweep_value,checkpoint,recon_mse,perplexity,entropy_ratio,"
               "mode_coverage,ood_fraction,dead_token_fraction");
  EXPECT_EQ(vqc::kReportSchemaVersion, 1);
}

TEST(Report, RowsRoundTripLosslessly) {
  std::mt19937_64 rng(1);
  std::uniform_real_distribution<double> u(0.0, 1.0);
  for (int i = 0; i < 200; ++i) {
    ReportRow r;
    r.experiment = "exp" + std::to_string(i % 3);
    r.arm = i % 2 ? "remedy" : "baseline";
    r.seed = rng();
    r.sweep_value = rng() % 4096;
    r.checkpoint = i % 5 ? "final" : std::to_string(i);
    r.recon_mse = u(rng) * 1e-3;
    r.perplexity = 1.0 + u(rng) * 127.0;
    r.entropy_ratio = u(rng);
    r.mode_coverage = (rng() % 11) / 10.0;
    r.ood_fraction = u(rng);
    r.dead_token_fraction = u(rng);
    EXPECT_EQ(vqc::parse_report_row(vqc::format_report_row(r)), r);
  }
}

TEST(Report, DivergedRowKeepsNan) {
  ReportRow r = row(std::nan(""), std::nan(""));
  r.checkpoint = "diverged";
  const ReportRow back = vqc::parse_report_row(vqc::format_report_row(r));
  EXPECT_EQ(back.checkpoint, "diverged");
  EXPECT_TRUE(std::isnan(back.recon_mse));
}

TEST(Report, MalformedRowsAreIoErrors) {
  EXPECT_THROW(vqc::parse_report_row("a,b,c"), vqc::IoError);
  EXPECT_THROW(vqc::parse_report_row("e,a,x,0,final,1,1,1,1,1,1"), vqc::IoError);
  EXPECT_THROW(vqc::parse_report_row("e,a,0,0,final,1,1,1,1,1,oops"), vqc::IoError);
}

TEST(Report, FileRoundTripAndConcurrentAppends) {
  const fs::path dir = fs::temp_directory_path() / "vqc-report-test";
  fs::remove_all(dir);
  fs::create_directories(dir);
  std::vector<ReportRow> rows;
  for (int i = 0; i < 5; ++i) rows.push_back(row(0.1 * i, 1.0 + i));
  vqc::write_report(dir / "r.csv", rows);
  EXPECT_EQ(vqc::read_report(dir / "r.csv"), rows);

  vqc::ReportAppender app(dir / "a.csv");
  std::vector<std::thread> threads;
  for (int t = 0; t < 4; ++t) {
    threads.emplace_back([&, t] {
      for (int i = 0; i < 50; ++i) app.append(row(t, i + 1.0));
    });
  }
  for (auto& t : threads) t.join();
  EXPECT_EQ(vqc::read_report(dir / "a.csv").size(), 200u);
  std::ifstream in(dir / "a.csv");
  std::string header;
  std::getline(in, header);
  EXPECT_EQ(header, vqc::kReportHeader);
  EXPECT_THROW(vqc::read_report(dir / "missing.csv"), vqc::IoError);
}

TEST(PairedWinner, Fixtures) {
  EXPECT_EQ(vqc::paired_winner(row(0.2, 50), row(0.1, 80)), "remedy");
  EXPECT_EQ(vqc::paired_winner(row(0.1, 80), row(0.2, 50)), "baseline");
  EXPECT_EQ(vqc::paired_winner(row(0.2, 50), row(0.1, 40)), "mixed");
  EXPECT_EQ(vqc::paired_winner(row(0.1, 50), row(0.2, 80)), "mixed");
  EXPECT_EQ(vqc::paired_winner(row(0.1, 50), row(0.1, 50)), "mixed");
}

TEST(PairedSummary, FormatsOneLinePerPair) {
  vqc::PairedSummary s;
  s.experiment = "abl";
  s.seed = 2;
  s.sweep_value = 3;
  s.baseline_init_perplexity = 10;
  s.remedy_init_perplexity = 20;
  s.baseline = row(0.5, 30);
  s.remedy = row(0.25, 40);
  s.winner = vqc::paired_winner(s.baseline, s.remedy);
  EXPECT_EQ(vqc::format_summary_row(s), "abl,2,3,10,20,30,40,0.5,0.25,0,0,remedy");
  std::string header = vqc::kSummaryHeader;
  EXPECT_EQ(std::count(header.begin(), header.end(), ','), 11);
}
