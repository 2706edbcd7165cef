#pragma once

#include <cmath>
#include <cstdio>
#include <filesystem>
#include <fstream>
#include <span>
#include <string>
#include <string_view>
#include <vector>

#include "xaitext/attribution/attribution_vector.hpp"
#include "xaitext/error.hpp"
#include "xaitext/faithfulness.hpp"
#include "xaitext/text_pipeline.hpp"

namespace xaitext {

inline std::string html_escape(std::string_view s) {
  std::string out;
  out.reserve(s.size());
  for (char c : s) {
    switch (c) {
      case '&': out += "&amp;"; break;
      case '<': out += "&lt;"; break;
      case '>': out += "&gt;"; break;
      case '"': out += "&quot;"; break;
      case '\'': out += "&#39;"; break;
      default: out.push_back(c);
    }
  }
  return out;
}

inline std::string fixed(double v, int decimals) {
  char buf[64];
  std::snprintf(buf, sizeof buf, "%.*f", decimals, v);
  return buf;
}

struct HeatmapCaption {
  std::string method;
  std::string model;
  std::string detail;  // free text, e.g. the predicted probability
};

// Token heatmap as a self-contained HTML page. Every non-PAD token becomes
// one span; background alpha is |a| / max|a|, red for a > 0 (towards the
// true class), blue for a < 0, none for 0.
inline std::string render_heatmap(const TokenSequence& seq, const AttributionVector& attr,
                                  const Vocabulary& vocab, const HeatmapCaption& caption) {
  if (attr.size() != seq.size()) {
    throw DimensionError("render_heatmap: attribution length " + std::to_string(attr.size()) +
                         " != sequence length " + std::to_string(seq.size()));
  }
  double max_abs = 0.0;
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (seq.is_active(i)) max_abs = std::max(max_abs, std::abs(attr[i]));
  }
  std::string title = caption.method + " / " + caption.model;
  std::string html;
  html += "<!DOCTYPE html>\n<html lang=\"en\">\n<head>\n<meta charset=\"utf-8\">\n";
  html += "<title>" + html_escape(title) + "</title>\n";
  html +=
      "<style>\n"
      "body { font-family: sans-serif; max-width: 60em; margin: 2em auto; line-height: 2; }\n"
      ".tok { padding: 0.1em 0.15em; border-radius: 0.2em; }\n"
      ".legend span { padding: 0 0.5em; margin-right: 1em; }\n"
      "</style>\n</head>\n<body>\n";
  html += "<figure>\n<figcaption>" + html_escape(title);
  if (!caption.detail.empty()) html += " &middot; " + html_escape(caption.detail);
  html += "</figcaption>\n<p class=\"text\">\n";
  for (std::size_t i = 0; i < seq.size(); ++i) {
    if (!seq.is_active(i)) continue;
    const double a = attr[i];
    const double alpha = max_abs > 0.0 ? std::abs(a) / max_abs : 0.0;
    std::string style;
    if (a > 0.0) style = "background-color: rgba(220, 40, 40, " + fixed(alpha, 4) + ")";
    else if (a < 0.0) style = "background-color: rgba(40, 90, 220, " + fixed(alpha, 4) + ")";
    else style = "background-color: transparent";
    html += "<span class=\"tok\" data-pos=\"" + std::to_string(i) + "\" data-score=\"" +
            fixed(a, 6) + "\" style=\"" + style + "\">" + html_escape(vocab.token_of(seq[i])) +
            "</span>\n";
  }
  html += "</p>\n</figure>\n";
  html +=
      "<p class=\"legend\"><span style=\"background-color: rgba(220, 40, 40, 1.0000)\">towards "
      "true</span><span style=\"background-color: rgba(40, 90, 220, 1.0000)\">towards "
      "fake</span></p>\n";
  html += "</body>\n</html>\n";
  return html;
}

inline void write_text_file(const std::filesystem::path& path, std::string_view content) {
  std::ofstream out(path, std::ios::binary | std::ios::trunc);
  if (!out) throw Error("cannot write " + path.string());
  out.write(content.data(), static_cast<std::streamsize>(content.size()));
  if (!out) throw Error("write failed: " + path.string());
}

enum class TableFormat { csv, markdown };

// Method x metric table, six decimals per value.
inline std::string render_metrics_table(std::span<const AggregateRow> rows, TableFormat format) {
  if (rows.empty()) throw DataError("render_metrics_table: no rows");
  std::string out;
  if (format == TableFormat::csv) {
    out += "method,delta_comp,delta_suff,aopc,flip_at_k,time_s\n";
    for (const auto& r : rows) {
      out += detail::csv_quote(r.method) + "," + fixed(r.comp, 6) + "," + fixed(r.suff, 6) + "," +
             fixed(r.aopc, 6) + "," + fixed(r.flip_at_k, 6) + "," + fixed(r.time_s, 6) + "\n";
    }
    return out;
  }
  out += "| Method | Δ_comp | Δ_suff | AOPC | Flip@k | Time [s] |\n";
  out += "|---|---:|---:|---:|---:|---:|\n";
  for (const auto& r : rows) {
    std::string name;
    for (char c : r.method) name += c == '|' ? std::string("\\|") : std::string(1, c);
    out += "| " + name + " | " + fixed(r.comp, 6) + " | " + fixed(r.suff, 6) + " | " +
           fixed(r.aopc, 6) + " | " + fixed(r.flip_at_k, 6) + " | " + fixed(r.time_s, 6) + " |\n";
  }
  return out;
}

}  // namespace xaitext
