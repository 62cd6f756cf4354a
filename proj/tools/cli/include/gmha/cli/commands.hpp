#pragma once

#include <iosfwd>
#include <string>
#include <string_view>
#include <vector>

#include "gmha/cli/config.hpp"

namespace gmha::cli {

enum ExitCode : int {
  kExitOk = 0,
  kExitOracleFailure = 1,
  kExitConfigError = 2,
  kExitDiverged = 3,
};

struct ReportRow {
  std::string arch;
  std::size_t kv_bytes_per_token = 0;
  std::size_t attn_params = 0;   // one attention layer
  std::size_t model_params = 0;  // whole model, 0 when vocab or ffn is unset
  std::size_t heads = 0;
  std::size_t frh = 0;
  std::size_t slsd = 0;
  std::size_t ter = 0;
};

inline constexpr std::string_view kReportColumns = "arch,kv_bytes_per_token,attn_params,model_params,heads,frh,slsd,ter";

ReportRow report_row(const RunConfig& cfg, std::size_t elem_bytes);
std::string report_csv(const std::vector<ReportRow>& rows);
std::string report_json(const std::vector<ReportRow>& rows);
std::vector<ReportRow> parse_report_csv(std::string_view text);
std::vector<ReportRow> parse_report_json(std::string_view text);

// Init scale for gradient checks.
inline constexpr double kGradcheckInitStd = 0.3;

/// Entry point shared by the executable and tests. args excludes argv[0].
int run(const std::vector<std::string>& args, std::ostream& out, std::ostream& err);

}  // namespace gmha::cli
