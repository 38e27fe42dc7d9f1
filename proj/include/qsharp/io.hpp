#pragma once

#include <cstdint>
#include <cstdio>
#include <ctime>
#include <filesystem>
#include <fstream>
#include <sstream>
#include <stdexcept>
#include <string>
#include <utility>
#include <vector>

namespace qsharp {

inline constexpr const char* kArtifactVersion = "qsharp-lab 0.1.0";

/// Floating-point output convention: 9 significant digits everywhere, so
/// golden files compare across platforms.
inline std::string format_g9(double v) {
  char buf[40];
  std::snprintf(buf, sizeof buf, "%.9g", v);
  return buf;
}

struct CsvTable {
  std::vector<std::string> header;
  std::vector<std::vector<std::string>> rows;

  void add_row(std::vector<std::string> row) {
    if (row.size() != header.size()) throw std::logic_error("csv row arity mismatch");
    rows.push_back(std::move(row));
  }

  std::string to_string() const {
    std::ostringstream out;
    for (std::size_t i = 0; i < header.size(); ++i) out << (i ? "," : "") << header[i];
    out << "\n";
    for (const auto& row : rows) {
      for (std::size_t i = 0; i < row.size(); ++i) out << (i ? "," : "") << row[i];
      out << "\n";
    }
    return out.str();
  }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << to_string();
  }
};

inline std::uint64_t fnv1a64(const std::string& bytes) {
  std::uint64_t h = 0xcbf29ce484222325ULL;
  for (unsigned char c : bytes) {
    h ^= c;
    h *= 0x100000001b3ULL;
  }
  return h;
}

inline std::string read_file(const std::string& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw std::runtime_error("cannot read '" + path + "'");
  std::ostringstream buf;
  buf << in.rdbuf();
  return buf.str();
}

inline std::string file_checksum(const std::string& path) {
  char buf[20];
  std::snprintf(buf, sizeof buf, "%016llx",
                static_cast<unsigned long long>(fnv1a64(read_file(path))));
  return buf;
}

/// Written into every run directory; lists all emitted files with
/// checksums and is emitted even when the run fails (with the error).
struct RunManifest {
  std::string command;
  std::string resolved_config;
  std::uint64_t seed = 0;
  std::string started_at;
  std::string finished_at;
  std::vector<std::pair<std::string, std::string>> outputs;  // (path, checksum)
  std::string error;

  static std::string timestamp() {
    const std::time_t now = std::time(nullptr);
    char buf[32];
    std::strftime(buf, sizeof buf, "%Y-%m-%dT%H:%M:%SZ", std::gmtime(&now));
    return buf;
  }

  void add_output(const std::string& path) { outputs.emplace_back(path, file_checksum(path)); }

  void write(const std::string& path) const {
    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "manifest.version = " << kArtifactVersion << "\n";
    out << "manifest.command = " << command << "\n";
    out << "manifest.seed = " << seed << "\n";
    out << "manifest.started_at = " << started_at << "\n";
    out << "manifest.finished_at = " << finished_at << "\n";
    if (!error.empty()) out << "manifest.error = " << error << "\n";
    for (const auto& [file, checksum] : outputs)
      out << "output." << std::filesystem::path(file).filename().string() << " = " << checksum
          << "\n";
    out << "# resolved config\n" << resolved_config;
  }
};

/// Minimal SVG line-plot emitter: one polyline per series over shared
/// axes, no external tooling.
struct SvgPlot {
  std::string title;
  std::string x_label;
  std::string y_label;
  struct Series {
    std::string name;
    std::string color;
    std::vector<std::pair<double, double>> points;
  };
  std::vector<Series> series;

  void write(const std::string& path) const {
    double xmin = 0, xmax = 1, ymin = 0, ymax = 1;
    bool first = true;
    for (const auto& s : series) {
      for (const auto& [x, y] : s.points) {
        if (first) {
          xmin = xmax = x;
          ymin = ymax = y;
          first = false;
        }
        xmin = std::min(xmin, x);
        xmax = std::max(xmax, x);
        ymin = std::min(ymin, y);
        ymax = std::max(ymax, y);
      }
    }
    if (xmax == xmin) xmax = xmin + 1;
    if (ymax == ymin) ymax = ymin + 1;
    const double w = 640, hgt = 420, pad = 50;
    const auto sx = [&](double x) { return pad + (x - xmin) / (xmax - xmin) * (w - 2 * pad); };
    const auto sy = [&](double y) { return hgt - pad - (y - ymin) / (ymax - ymin) * (hgt - 2 * pad); };

    std::ofstream out(path);
    if (!out) throw std::runtime_error("cannot write '" + path + "'");
    out << "<svg xmlns='http://www.w3.org/2000/svg' width='" << w << "' height='" << hgt << "'>\n";
    out << "<rect width='100%' height='100%' fill='white'/>\n";
    out << "<text x='" << w / 2 << "' y='20' text-anchor='middle'>" << title << "</text>\n";
    out << "<text x='" << w / 2 << "' y='" << hgt - 8 << "' text-anchor='middle' font-size='12'>"
        << x_label << "</text>\n";
    out << "<text x='14' y='" << hgt / 2 << "' font-size='12' transform='rotate(-90 14 "
        << hgt / 2 << ")' text-anchor='middle'>" << y_label << "</text>\n";
    out << "<line x1='" << pad << "' y1='" << hgt - pad << "' x2='" << w - pad << "' y2='"
        << hgt - pad << "' stroke='black'/>\n";
    out << "<line x1='" << pad << "' y1='" << pad << "' x2='" << pad << "' y2='" << hgt - pad
        << "' stroke='black'/>\n";
    int legend_y = static_cast<int>(pad);
    for (const auto& s : series) {
      out << "<polyline fill='none' stroke='" << s.color << "' stroke-width='1.5' points='";
      for (const auto& [x, y] : s.points) out << sx(x) << ',' << sy(y) << ' ';
      out << "'/>\n";
      out << "<text x='" << w - pad + 4 << "' y='" << legend_y << "' font-size='11' fill='"
          << s.color << "'>" << s.name << "</text>\n";
      legend_y += 14;
    }
    out << "</svg>\n";
  }
};

}  // namespace qsharp
