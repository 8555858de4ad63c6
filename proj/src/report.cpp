#include "lclab/report.hpp"

#include <fcntl.h>
#include <unistd.h>

#include <algorithm>
#include <cerrno>
#include <cmath>
#include <cstdio>
#include <cstring>
#include <fstream>
#include <map>
#include <sstream>

#include "lclab/csv.hpp"
#include "lclab/errors.hpp"

namespace lclab {

namespace {

std::string fixed(double v, int digits = 2) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", digits, v);
  if (std::strcmp(buf, "-0.00") == 0) return "0.00";
  return buf;
}

std::string sci(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.4e", v);
  return buf;
}

std::string xml_escape(const std::string& s) {
  std::string out;
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      default: out += c;
    }
  }
  return out;
}

constexpr const char* kPalette[] = {"#1f77b4", "#ff7f0e", "#2ca02c", "#d62728", "#9467bd",
                                    "#8c564b", "#e377c2", "#7f7f7f", "#bcbd22", "#17becf"};

struct Series {
  std::string label;
  std::vector<double> x, y, err;
};

// Tick label with three significant digits.
std::string tick(double v) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.3g", v);
  return buf;
}

std::string render_chart(const std::vector<Series>& series, const std::string& title, const std::string& x_label,
                         const std::string& y_label, bool log2_x) {
  constexpr double W = 760, H = 480, L = 80, R = 200, T = 40, B = 60;
  double xmin = INFINITY, xmax = -INFINITY, ymin = 0.0, ymax = -INFINITY;
  auto tx = [&](double x) { return log2_x ? std::log2(x) : x; };
  for (const auto& s : series) {
    for (std::size_t i = 0; i < s.x.size(); ++i) {
      xmin = std::min(xmin, tx(s.x[i]));
      xmax = std::max(xmax, tx(s.x[i]));
      const double e = s.err.empty() ? 0.0 : s.err[i];
      ymin = std::min(ymin, s.y[i] - e);
      ymax = std::max(ymax, s.y[i] + e);
    }
  }
  if (!std::isfinite(xmin)) xmin = 0, xmax = 1;
  if (xmax == xmin) xmax = xmin + 1;
  if (!std::isfinite(ymax) || ymax <= ymin) ymax = ymin + 1;
  ymax += 0.05 * (ymax - ymin);
  auto px = [&](double x) { return L + (tx(x) - xmin) / (xmax - xmin) * (W - L - R); };
  auto py = [&](double y) { return H - B - (y - ymin) / (ymax - ymin) * (H - T - B); };

  std::ostringstream o;
  o << "<?xml version=\"1.0\" encoding=\"UTF-8\"?>\n";
  o << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << W << "\" height=\"" << H << "\" viewBox=\"0 0 " << W
    << " " << H << "\" font-family=\"sans-serif\" font-size=\"12\">\n";
  o << "<rect x=\"0\" y=\"0\" width=\"" << W << "\" height=\"" << H << "\" fill=\"white\"/>\n";
  o << "<text x=\"" << fixed(W / 2) << "\" y=\"24\" text-anchor=\"middle\" font-size=\"15\">" << xml_escape(title)
    << "</text>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << H - B << "\" x2=\"" << W - R << "\" y2=\"" << H - B
    << "\" stroke=\"black\"/>\n";
  o << "<line x1=\"" << L << "\" y1=\"" << T << "\" x2=\"" << L << "\" y2=\"" << H - B << "\" stroke=\"black\"/>\n";

  // x ticks at the distinct x values of the first series (sweep lengths), or 5 even ticks.
  std::vector<double> xticks;
  if (log2_x && !series.empty()) {
    xticks = series.front().x;
  } else {
    for (int i = 0; i <= 4; ++i) xticks.push_back(xmin + (xmax - xmin) * i / 4.0);
  }
  for (double xv : xticks) {
    const double X = log2_x ? px(xv) : L + (xv - xmin) / (xmax - xmin) * (W - L - R);
    o << "<line x1=\"" << fixed(X) << "\" y1=\"" << H - B << "\" x2=\"" << fixed(X) << "\" y2=\"" << H - B + 5
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << fixed(X) << "\" y=\"" << H - B + 18 << "\" text-anchor=\"middle\">" << tick(xv) << "</text>\n";
  }
  for (int i = 0; i <= 4; ++i) {
    const double yv = ymin + (ymax - ymin) * i / 4.0;
    o << "<line x1=\"" << L - 5 << "\" y1=\"" << fixed(py(yv)) << "\" x2=\"" << L << "\" y2=\"" << fixed(py(yv))
      << "\" stroke=\"black\"/>\n";
    o << "<text x=\"" << L - 8 << "\" y=\"" << fixed(py(yv) + 4) << "\" text-anchor=\"end\">" << tick(yv)
      << "</text>\n";
  }
  o << "<text x=\"" << fixed((L + W - R) / 2) << "\" y=\"" << H - 18 << "\" text-anchor=\"middle\">"
    << xml_escape(x_label) << "</text>\n";
  o << "<text x=\"18\" y=\"" << fixed((T + H - B) / 2) << "\" text-anchor=\"middle\" transform=\"rotate(-90 18 "
    << fixed((T + H - B) / 2) << ")\">" << xml_escape(y_label) << "</text>\n";

  for (std::size_t si = 0; si < series.size(); ++si) {
    const auto& s = series[si];
    const char* color = kPalette[si % std::size(kPalette)];
    o << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
    for (std::size_t i = 0; i < s.x.size(); ++i) o << (i ? " " : "") << fixed(px(s.x[i])) << "," << fixed(py(s.y[i]));
    o << "\"><title>" << xml_escape(s.label) << "</title></polyline>\n";
    for (std::size_t i = 0; i < s.err.size(); ++i) {
      if (s.err[i] <= 0.0) continue;
      const double X = px(s.x[i]);
      o << "<line x1=\"" << fixed(X) << "\" y1=\"" << fixed(py(s.y[i] - s.err[i])) << "\" x2=\"" << fixed(X)
        << "\" y2=\"" << fixed(py(s.y[i] + s.err[i])) << "\" stroke=\"" << color << "\" stroke-width=\"1\"/>\n";
    }
    const double ly = T + 10 + 18.0 * static_cast<double>(si);
    o << "<line x1=\"" << W - R + 15 << "\" y1=\"" << fixed(ly) << "\" x2=\"" << W - R + 35 << "\" y2=\"" << fixed(ly)
      << "\" stroke=\"" << color << "\" stroke-width=\"2\"/>\n";
    o << "<text x=\"" << W - R + 40 << "\" y=\"" << fixed(ly + 4) << "\">" << xml_escape(s.label) << "</text>\n";
  }
  o << "</svg>\n";
  return o.str();
}

template <typename Key>
std::size_t index_of(std::vector<Key>& order, const Key& k) {
  auto it = std::find(order.begin(), order.end(), k);
  if (it != order.end()) return static_cast<std::size_t>(it - order.begin());
  order.push_back(k);
  return order.size() - 1;
}

std::vector<Series> sweep_series(std::span<const SweepRecord> records) {
  std::vector<std::string> order;
  std::vector<Series> series;
  for (const auto& r : records) {
    const std::size_t i = index_of(order, r.method_label);
    if (i == series.size()) series.push_back({r.method_label, {}, {}, {}});
    series[i].x.push_back(static_cast<double>(r.context_length));
    series[i].y.push_back(r.kl_mean);
    series[i].err.push_back(r.kl_std);
  }
  return series;
}

std::vector<SlopeRow> fit_series(const std::vector<Series>& series) {
  std::vector<SlopeRow> rows;
  for (const auto& s : series) {
    if (s.x.size() < 2 || *std::min_element(s.x.begin(), s.x.end()) == *std::max_element(s.x.begin(), s.x.end())) {
      continue;
    }
    rows.push_back({s.label, fit_line(s.x, s.y), s.x.size()});
  }
  return rows;
}

}  // namespace

std::vector<SlopeRow> slope_table(std::span<const SweepRecord> records) { return fit_series(sweep_series(records)); }

std::vector<SlopeRow> slope_table(std::span<const NoiseCurve> curves) {
  std::vector<Series> series;
  for (const auto& c : curves) {
    Series s{to_string(c.interpretation), {}, c.variance, {}};
    for (std::size_t t : c.t) s.x.push_back(static_cast<double>(t));
    series.push_back(std::move(s));
  }
  return fit_series(series);
}

std::string write_slope_csv(std::span<const SlopeRow> rows) {
  std::string out = std::string(kSlopeCsvHeader) + "\n";
  for (const auto& r : rows) {
    out += csv::escape(r.label) + "," + csv::format_double(r.fit.slope) + "," + csv::format_double(r.fit.r2) + "\n";
  }
  return out;
}

std::string render_slope_text(std::span<const SlopeRow> rows, const std::string& x_unit) {
  std::size_t w = 6;
  for (const auto& r : rows) w = std::max(w, r.label.size());
  std::ostringstream o;
  char line[256];
  std::snprintf(line, sizeof line, "%-*s  %14s  %12s  %8s\n", static_cast<int>(w), "method", ("slope/" + x_unit).c_str(),
                "intercept", "r2");
  o << line;
  for (const auto& r : rows) {
    std::snprintf(line, sizeof line, "%-*s  %14.6e  %12.6e  %8.4f\n", static_cast<int>(w), r.label.c_str(), r.fit.slope,
                  r.fit.intercept, r.fit.r2);
    o << line;
  }
  return o.str();
}

std::string describe_trends(std::span<const SweepRecord> records, std::span<const CompressionSpec> specs) {
  const auto rows = slope_table(records);
  auto slope_of = [&](const std::string& label) -> const SlopeRow* {
    for (const auto& r : rows) {
      if (r.label == label) return &r;
    }
    return nullptr;
  };
  std::vector<double> prune_slopes, quant_slopes;
  std::vector<std::string> lines;
  for (const auto& spec : specs) {
    const SlopeRow* row = slope_of(spec.label);
    if (row == nullptr) continue;
    if (const auto* p = std::get_if<PruneSpec>(&spec.method)) {
      if (p->method == PruneMethod::kRandom) {
        lines.push_back("random pruning '" + spec.label + "': slope " + sci(row->fit.slope) + " (r2 " +
                        fixed(row->fit.r2, 3) + "); expected positive and near-linear");
      } else {
        prune_slopes.push_back(row->fit.slope);
      }
    } else if (const auto* q = std::get_if<QuantSpec>(&spec.method)) {
      if (q->salient_fraction > 0.0) {
        for (const auto& other : specs) {
          const auto* u = std::get_if<QuantSpec>(&other.method);
          const SlopeRow* urow = slope_of(other.label);
          if (u && urow && u->salient_fraction == 0.0 && u->weight_bits == q->weight_bits &&
              u->activation_bits == q->activation_bits) {
            lines.push_back("mixed precision '" + spec.label + "' slope " + sci(row->fit.slope) +
                            " vs uniform '" + other.label + "' slope " + sci(urow->fit.slope) +
                            "; expected flatter: " + (std::fabs(row->fit.slope) < std::fabs(urow->fit.slope) ? "yes" : "no"));
          }
        }
      } else if (q->weight_bits <= 4) {
        quant_slopes.push_back(row->fit.slope);
      }
    }
  }
  std::ostringstream o;
  o << "Directional findings (expected for trained long-context models; reported, not asserted on the toy model):\n";
  if (!prune_slopes.empty() && !quant_slopes.empty()) {
    double mp = 0, mq = 0;
    for (double s : prune_slopes) mp += s;
    for (double s : quant_slopes) mq += s;
    mp /= static_cast<double>(prune_slopes.size());
    mq /= static_cast<double>(quant_slopes.size());
    o << "  mean low-bit (<=4) quantization slope " << sci(mq) << " vs magnitude/wanda pruning slope "
      << sci(mp) << "; expected quantization > pruning: " << (mq > mp ? "yes" : "no") << "\n";
  }
  for (const auto& l : lines) o << "  " << l << "\n";
  return o.str();
}

std::string render_sweep_svg(std::span<const SweepRecord> records) {
  return render_chart(sweep_series(records), "KL(compressed || base) vs context length", "context length (tokens)",
                      "mean KL (nats)", true);
}

std::string render_noise_svg(std::span<const NoiseCurve> curves) {
  std::vector<Series> series;
  for (const auto& c : curves) {
    Series s{to_string(c.interpretation), {}, c.variance, {}};
    for (std::size_t t : c.t) s.x.push_back(static_cast<double>(t));
    series.push_back(std::move(s));
  }
  return render_chart(series, "Hidden-state error variance vs position", "position t", "Var[h_t noisy - h_t clean]",
                      false);
}

void write_text_file(const std::filesystem::path& path, const std::string& text) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw IoError("cannot open " + path.string() + " for writing");
  out << text;
  if (!out) throw IoError("failed writing " + path.string());
}

std::string read_text_file(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw IoError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

OutputDirLock::OutputDirLock(const std::filesystem::path& dir) {
  std::error_code ec;
  std::filesystem::create_directories(dir, ec);
  if (ec) throw IoError("cannot create output directory " + dir.string() + ": " + ec.message());
  lock_path_ = dir / ".lclab.lock";
  const int fd = ::open(lock_path_.c_str(), O_CREAT | O_EXCL | O_WRONLY, 0644);
  if (fd < 0) {
    const int err = errno;
    lock_path_.clear();
    if (err == EEXIST) throw IoError("output directory " + dir.string() + " is locked by another run (.lclab.lock)");
    throw IoError("cannot create lockfile in " + dir.string() + ": " + std::strerror(err));
  }
  const std::string pid = std::to_string(::getpid()) + "\n";
  [[maybe_unused]] auto n = ::write(fd, pid.data(), pid.size());
  ::close(fd);
}

OutputDirLock::~OutputDirLock() {
  if (!lock_path_.empty()) {
    std::error_code ec;
    std::filesystem::remove(lock_path_, ec);
  }
}

}  // namespace lclab
