#include "fryshort/train/plots.hpp"

#include <algorithm>
#include <cmath>
#include <limits>
#include <map>
#include <sstream>
#include <stdexcept>
#include <vector>

namespace fryshort::train {

namespace {

struct Table {
  std::vector<std::string> header;
  std::vector<std::vector<double>> rows;  // NaN for empty cells

  std::size_t col(const std::string& name) const {
    for (std::size_t i = 0; i < header.size(); ++i)
      if (header[i] == name) return i;
    throw std::runtime_error("metrics CSV is missing column \"" + name + "\"");
  }
};

Table parse_csv(const std::string& text, const char* what) {
  Table t;
  std::istringstream in(text);
  std::string line;
  bool first = true;
  while (std::getline(in, line)) {
    if (line.empty()) continue;
    std::vector<std::string> cells;
    std::string cell;
    std::istringstream row(line);
    while (std::getline(row, cell, ',')) cells.push_back(cell);
    if (line.back() == ',') cells.push_back("");
    if (first) {
      t.header = cells;
      first = false;
      continue;
    }
    std::vector<double> vals;
    for (const auto& c : cells) {
      if (c.empty()) {
        vals.push_back(std::numeric_limits<double>::quiet_NaN());
        continue;
      }
      try {
        vals.push_back(std::stod(c));
      } catch (const std::exception&) {
        throw std::runtime_error(std::string(what) + " has a malformed cell: \"" + c + "\"");
      }
    }
    vals.resize(t.header.size(), std::numeric_limits<double>::quiet_NaN());
    t.rows.push_back(std::move(vals));
  }
  if (t.header.empty() || t.rows.empty())
    throw std::runtime_error(std::string(what) + " has no data rows");
  return t;
}

std::string num(double v) {
  std::ostringstream s;
  s.setf(std::ios::fixed);
  s.precision(2);
  s << v;
  return s.str();
}

std::string value_label(double v) {
  std::ostringstream s;
  s.precision(4);
  s << v;
  return s.str();
}

constexpr double kW = 840, kH = 420, kL = 70, kR = 70, kT = 30, kB = 50;

double x_of(double frac) { return kL + frac * (kW - kL - kR); }
double y_of(double frac) { return kH - kB - frac * (kH - kT - kB); }

std::string polyline(const std::vector<double>& xs, const std::vector<double>& ys, double x_min,
                     double x_max, double y_min, double y_max, const char* color) {
  std::ostringstream s;
  s << "<polyline fill=\"none\" stroke=\"" << color << "\" stroke-width=\"1.5\" points=\"";
  const double x_span = std::max(x_max - x_min, 1e-12);
  const double y_span = std::max(y_max - y_min, 1e-12);
  bool first = true;
  for (std::size_t i = 0; i < xs.size(); ++i) {
    if (std::isnan(ys[i])) continue;
    if (!first) s << ' ';
    first = false;
    s << num(x_of((xs[i] - x_min) / x_span)) << ',' << num(y_of((ys[i] - y_min) / y_span));
  }
  s << "\"/>\n";
  return s.str();
}

std::string text(double x, double y, const std::string& body, const char* anchor = "middle",
                 const char* color = "#333") {
  std::ostringstream s;
  s << "<text x=\"" << num(x) << "\" y=\"" << num(y) << "\" font-family=\"sans-serif\" "
    << "font-size=\"12\" fill=\"" << color << "\" text-anchor=\"" << anchor << "\">" << body
    << "</text>\n";
  return s.str();
}

std::string frame_and_open() {
  std::ostringstream s;
  s << "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"" << kW << "\" height=\"" << kH
    << "\" viewBox=\"0 0 " << kW << ' ' << kH << "\">\n"
    << "<rect width=\"" << kW << "\" height=\"" << kH << "\" fill=\"white\"/>\n"
    << "<rect x=\"" << num(kL) << "\" y=\"" << num(kT) << "\" width=\"" << num(kW - kL - kR)
    << "\" height=\"" << num(kH - kT - kB) << "\" fill=\"none\" stroke=\"#999\"/>\n";
  return s.str();
}

}  // namespace

std::string render_loss_curves(const std::string& train_csv, const std::string& val_csv) {
  Table train = parse_csv(train_csv, "training curve CSV");
  Table val = parse_csv(val_csv, "validation metrics CSV");

  const auto it_c = train.col("iter"), total_c = train.col("total");
  const auto vit_c = val.col("iter"), miou_c = val.col("miou");

  std::vector<double> iters, totals, val_iters, mious;
  for (const auto& r : train.rows) {
    iters.push_back(r[it_c]);
    totals.push_back(r[total_c]);
  }
  for (const auto& r : val.rows) {
    val_iters.push_back(r[vit_c]);
    mious.push_back(r[miou_c]);
  }

  const double x_min = iters.front(), x_max = std::max(iters.back(), iters.front() + 1);
  double loss_max = 0;
  for (double v : totals)
    if (!std::isnan(v)) loss_max = std::max(loss_max, v);
  if (loss_max <= 0) loss_max = 1;

  std::ostringstream svg;
  svg << frame_and_open();
  svg << polyline(iters, totals, x_min, x_max, 0.0, loss_max, "#c0392b");
  svg << polyline(val_iters, mious, x_min, x_max, 0.0, 1.0, "#2980b9");
  svg << text(kW / 2, kH - 14, "iteration");
  svg << text(kL - 8, kT + 10, num(loss_max), "end", "#c0392b");
  svg << text(kL - 8, kH - kB, "0", "end", "#c0392b");
  svg << text(kW - kR + 8, kT + 10, "1.00", "start", "#2980b9");
  svg << text(kW - kR + 8, kH - kB, "0", "start", "#2980b9");
  svg << text(kL + 10, kT + 14, "total loss", "start", "#c0392b");
  svg << text(kL + 10, kT + 30, "val mIoU", "start", "#2980b9");
  svg << "</svg>\n";
  return svg.str();
}

std::string render_mae_bars(const std::string& val_csv) {
  Table val = parse_csv(val_csv, "validation metrics CSV");
  const std::vector<std::pair<std::string, std::string>> targets = {
      {"mae_pv", "PV"}, {"mae_p_av", "p-AV"}, {"mae_totox", "Totox"}, {"mae_temp", "Temp"}};
  const auto& last = val.rows.back();

  double top = 0;
  std::vector<double> values;
  for (const auto& [col, label] : targets) {
    (void)label;
    const double v = last[val.col(col)];
    if (std::isnan(v)) throw std::runtime_error("validation metrics CSV has an empty MAE cell");
    values.push_back(v);
    top = std::max(top, v);
  }
  if (top <= 0) top = 1;

  std::ostringstream svg;
  svg << frame_and_open();
  const double plot_w = kW - kL - kR;
  const double band = plot_w / static_cast<double>(targets.size());
  for (std::size_t i = 0; i < targets.size(); ++i) {
    const double h_frac = values[i] / top;
    const double bar_w = band * 0.55;
    const double x = kL + band * (static_cast<double>(i) + 0.5) - bar_w / 2;
    const double y = y_of(h_frac);
    svg << "<rect x=\"" << num(x) << "\" y=\"" << num(y) << "\" width=\"" << num(bar_w)
        << "\" height=\"" << num(kH - kB - y) << "\" fill=\"#8e44ad\"/>\n";
    svg << text(x + bar_w / 2, kH - kB + 18, targets[i].second);
    svg << text(x + bar_w / 2, y - 6, value_label(values[i]));
  }
  svg << text(kW / 2, kH - 14, "per-target MAE (raw units)");
  svg << text(kL - 8, kT + 10, value_label(top), "end");
  svg << "</svg>\n";
  return svg.str();
}

}  // namespace fryshort::train
