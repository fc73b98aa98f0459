#pragma once

// Plain CSV readers/writers for the stage-to-stage file formats. Numbers are
// written with the shortest representation that round-trips exactly.

#include <filesystem>
#include <string>
#include <vector>

#include "ddetect/prep.hpp"
#include "ddetect/sim.hpp"

namespace ddetect::csv {

/// Header `t,rpm,power,<channel...>`, one row per frame.
void write_telemetry(const std::filesystem::path& path, const sim::Telemetry& data);
sim::Telemetry read_telemetry(const std::filesystem::path& path);

/// Header `rpm,power,<channel...>[,origin]`.
void write_dataset(const std::filesystem::path& path, const prep::Dataset& data,
                   bool with_origin = false);
prep::Dataset read_dataset(const std::filesystem::path& path);

/// Generic table writer used for traces and per-sample outputs. Empty cells
/// are written for NaN entries.
void write_table(const std::filesystem::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& columns);

std::vector<std::string> split_line(const std::string& line);
double parse_double(const std::string& text, const std::filesystem::path& path, std::size_t line);

/// Writes text to `path`, throwing Error on failure.
void write_text(const std::filesystem::path& path, const std::string& text);
std::string read_text(const std::filesystem::path& path);

}  // namespace ddetect::csv
