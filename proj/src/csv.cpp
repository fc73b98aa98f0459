#include "ddetect/csv.hpp"

#include <charconv>
#include <cmath>
#include <fstream>
#include <sstream>

namespace ddetect::csv {

namespace fs = std::filesystem;

void write_text(const fs::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot open '" + path.string() + "' for writing");
  out << text;
  if (!out) throw Error("failed writing '" + path.string() + "'");
}

std::string read_text(const fs::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

std::vector<std::string> split_line(const std::string& line) {
  std::vector<std::string> out;
  std::string cur;
  for (char ch : line) {
    if (ch == ',') {
      out.push_back(cur);
      cur.clear();
    } else if (ch != '\r') {
      cur.push_back(ch);
    }
  }
  out.push_back(cur);
  return out;
}

double parse_double(const std::string& text, const fs::path& path, std::size_t line) {
  if (text == "nan" || text.empty()) return std::nan("");
  if (text == "inf") return INFINITY;
  if (text == "-inf") return -INFINITY;
  double v = 0.0;
  auto res = std::from_chars(text.data(), text.data() + text.size(), v);
  if (res.ec != std::errc{} || res.ptr != text.data() + text.size()) {
    throw Error(path.string() + ":" + std::to_string(line) + ": cannot parse number '" + text + "'");
  }
  return v;
}

namespace {

void append_row(std::string& out, std::initializer_list<double> head, const std::vector<double>& tail) {
  bool first = true;
  for (double v : head) {
    if (!first) out.push_back(',');
    out += format_double(v);
    first = false;
  }
  for (double v : tail) {
    if (!first) out.push_back(',');
    out += format_double(v);
    first = false;
  }
  out.push_back('\n');
}

std::vector<std::vector<std::string>> read_rows(const fs::path& path, std::vector<std::string>& header) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path.string() + "' for reading");
  std::string line;
  if (!std::getline(in, line)) throw Error(path.string() + ": missing header");
  header = split_line(line);
  std::vector<std::vector<std::string>> rows;
  std::size_t lineno = 1;
  while (std::getline(in, line)) {
    ++lineno;
    if (line.empty() || line == "\r") continue;
    auto cells = split_line(line);
    if (cells.size() != header.size()) {
      throw Error(path.string() + ":" + std::to_string(lineno) + ": expected " +
                  std::to_string(header.size()) + " fields, got " + std::to_string(cells.size()));
    }
    rows.push_back(std::move(cells));
  }
  return rows;
}

}  // namespace

void write_telemetry(const fs::path& path, const sim::Telemetry& data) {
  std::string out = "t,rpm,power";
  for (const auto& c : data.channels) out += "," + c;
  out.push_back('\n');
  for (const auto& f : data.frames) append_row(out, {f.t, f.rpm, f.power}, f.values);
  write_text(path, out);
}

sim::Telemetry read_telemetry(const fs::path& path) {
  std::vector<std::string> header;
  auto rows = read_rows(path, header);
  if (header.size() < 4 || header[0] != "t" || header[1] != "rpm" || header[2] != "power") {
    throw Error(path.string() + ": header must start with t,rpm,power and name at least one channel");
  }
  sim::Telemetry data;
  data.channels.assign(header.begin() + 3, header.end());
  std::size_t lineno = 1;
  for (const auto& r : rows) {
    ++lineno;
    sim::Frame f;
    f.t = parse_double(r[0], path, lineno);
    f.rpm = parse_double(r[1], path, lineno);
    f.power = parse_double(r[2], path, lineno);
    for (std::size_t c = 3; c < r.size(); ++c) f.values.push_back(parse_double(r[c], path, lineno));
    data.frames.push_back(std::move(f));
  }
  if (data.frames.size() >= 2) data.step_s = data.frames[1].t - data.frames[0].t;
  return data;
}

void write_dataset(const fs::path& path, const prep::Dataset& data, bool with_origin) {
  std::string out = "rpm,power";
  for (const auto& c : data.channels) out += "," + c;
  if (with_origin) out += ",origin";
  out.push_back('\n');
  for (std::size_t r = 0; r < data.size(); ++r) {
    auto x = data.X.row(r);
    auto y = data.Y.row(r);
    append_row(out, {x[0], x[1]}, std::vector<double>(y.begin(), y.end()));
    if (with_origin) {
      out.pop_back();
      out += data.origin[r] == prep::Origin::real ? ",real\n" : ",synthetic\n";
    }
  }
  write_text(path, out);
}

prep::Dataset read_dataset(const fs::path& path) {
  std::vector<std::string> header;
  auto rows = read_rows(path, header);
  if (header.size() < 3 || header[0] != "rpm" || header[1] != "power") {
    throw Error(path.string() + ": header must start with rpm,power and name at least one channel");
  }
  const bool has_origin = header.back() == "origin";
  prep::Dataset d;
  d.channels.assign(header.begin() + 2, header.end() - (has_origin ? 1 : 0));
  if (d.channels.empty()) throw Error(path.string() + ": no channel columns");
  d.X = Matrix(0, 2);
  d.Y = Matrix(0, d.channels.size());
  std::size_t lineno = 1;
  for (const auto& r : rows) {
    ++lineno;
    const double x[2] = {parse_double(r[0], path, lineno), parse_double(r[1], path, lineno)};
    std::vector<double> y;
    for (std::size_t c = 0; c < d.channels.size(); ++c) y.push_back(parse_double(r[2 + c], path, lineno));
    d.X.push_row(x);
    d.Y.push_row(y);
    d.row_ids.push_back(d.row_ids.size());
    prep::Origin o = prep::Origin::real;
    if (has_origin) {
      if (r.back() == "synthetic") {
        o = prep::Origin::synthetic;
      } else if (r.back() != "real") {
        throw Error(path.string() + ":" + std::to_string(lineno) + ": origin must be real or synthetic");
      }
    }
    d.origin.push_back(o);
  }
  if (d.size() == 0) throw Error(path.string() + ": no data rows");
  d.refit_stats();
  return d;
}

void write_table(const fs::path& path, const std::vector<std::string>& header,
                 const std::vector<std::vector<double>>& columns) {
  if (header.size() != columns.size()) throw InvalidArgument("write_table: header/column mismatch");
  std::string out;
  for (std::size_t i = 0; i < header.size(); ++i) {
    if (i) out.push_back(',');
    out += header[i];
  }
  out.push_back('\n');
  const std::size_t n = columns.empty() ? 0 : columns.front().size();
  for (const auto& c : columns) {
    if (c.size() != n) throw InvalidArgument("write_table: ragged columns");
  }
  for (std::size_t r = 0; r < n; ++r) {
    for (std::size_t i = 0; i < columns.size(); ++i) {
      if (i) out.push_back(',');
      if (!std::isnan(columns[i][r])) out += format_double(columns[i][r]);
    }
    out.push_back('\n');
  }
  write_text(path, out);
}

}  // namespace ddetect::csv
