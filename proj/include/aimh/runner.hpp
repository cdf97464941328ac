#pragma once

#include <cstdint>
#include <optional>
#include <string>
#include <vector>

#include "aimh/config.hpp"
#include "aimh/diagnostics.hpp"

namespace aimh {

inline constexpr int kArtifactFormatVersion = 1;

/// Paths are relative to `dir`.
struct RunArtifacts {
  std::string dir;
  std::string config_file = "config.json";
  std::string manifest_file = "manifest.json";
  std::string trace_file = "trace.csv";
  std::string events_file = "events.jsonl";
  std::string report_file = "report.json";
  std::vector<std::string> checkpoint_files;
  DiagnosticsReport report;
};

/// Runs the configured experiment, writing every artifact under config.out,
/// and returns the report recomputed from the written trace.
RunArtifacts run_experiment(const RunConfig& config);

struct ReplayOptions {
  std::optional<std::size_t> projections;  // overrides diagnostics.projections
};

/// Recomputes the diagnostics report from the artifacts in `dir` without
/// sampling. Missing or damaged files raise CorruptArtifact errors.
DiagnosticsReport replay_diagnostics(const std::string& dir, const ReplayOptions& options = {});

/// Serialized report exactly as written to report.json.
std::string report_text(const DiagnosticsReport& report);

/// Columns of a trace file: a header plus numeric rows. Chain traces keep the
/// kernel tag column as text in `tags`.
struct TraceTable {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;
  std::vector<std::string> tags;
};

TraceTable read_trace(const std::string& path, std::size_t expected_rows);

}  // namespace aimh
