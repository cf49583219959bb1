// Text formats: recording CSV ingestion, CSV writers, model coefficient dumps.
#pragma once

#include <charconv>
#include <cstddef>
#include <fstream>
#include <istream>
#include <optional>
#include <ostream>
#include <sstream>
#include <string>
#include <string_view>
#include <system_error>
#include <vector>

#include "fnn/datagen.hpp"
#include "fnn/error.hpp"
#include "fnn/funcore.hpp"
#include "fnn/model.hpp"

namespace fnn {

/// Shortest decimal text that reads back to the same double.
inline std::string format_double(double v) {
  char buf[32];
  const auto res = std::to_chars(buf, buf + sizeof buf, v);
  return std::string(buf, res.ptr);
}

namespace detail {

inline std::string_view trim(std::string_view s) {
  while (!s.empty() && (s.front() == ' ' || s.front() == '\t')) s.remove_prefix(1);
  while (!s.empty() && (s.back() == ' ' || s.back() == '\t' || s.back() == '\r')) s.remove_suffix(1);
  return s;
}

inline std::vector<std::string_view> split(std::string_view s, char sep) {
  std::vector<std::string_view> out;
  std::size_t start = 0;
  for (;;) {
    const std::size_t pos = s.find(sep, start);
    out.push_back(trim(s.substr(start, pos - start)));
    if (pos == std::string_view::npos) break;
    start = pos + 1;
  }
  return out;
}

inline std::vector<std::string_view> tokens(std::string_view s) {
  std::vector<std::string_view> out;
  std::size_t i = 0;
  while (i < s.size()) {
    while (i < s.size() && (s[i] == ' ' || s[i] == '\t' || s[i] == '\r')) ++i;
    const std::size_t start = i;
    while (i < s.size() && s[i] != ' ' && s[i] != '\t' && s[i] != '\r') ++i;
    if (i > start) out.push_back(s.substr(start, i - start));
  }
  return out;
}

template <typename T>
std::optional<T> parse_number(std::string_view s) {
  T v{};
  const auto res = std::from_chars(s.data(), s.data() + s.size(), v);
  if (res.ec != std::errc{} || res.ptr != s.data() + s.size()) return std::nullopt;
  return v;
}

template <typename T>
T parse_or_throw(std::string_view s, std::size_t line, const char* what) {
  auto v = parse_number<T>(s);
  if (!v) throw ParseError(line, std::string("bad ") + what + " '" + std::string(s) + "'");
  return *v;
}

}  // namespace detail

// --- recordings --------------------------------------------------------------

/// A multichannel recording as read from `time,ch1,...,chd[,label]`.
struct Recording {
  std::vector<std::string> channel_names;
  std::vector<double> time;
  std::vector<std::vector<double>> channels;
  std::vector<int> labels;  // empty when the file has no label column

  bool has_labels() const noexcept { return !labels.empty(); }
  std::size_t length() const noexcept { return time.size(); }

  /// Channel data on the grid of the recording length.
  MultiCurve data() const {
    std::vector<double> flat;
    flat.reserve(channels.size() * time.size());
    for (const auto& c : channels) flat.insert(flat.end(), c.begin(), c.end());
    return MultiCurve(Grid(time.size()), channels.size(), std::move(flat));
  }
};

/// Errors carry the 1-based line number of the offending row.
inline Recording read_recording_csv(std::istream& in) {
  std::string line;
  std::size_t line_no = 0;
  Recording rec;
  bool labelled = false;
  while (std::getline(in, line)) {
    ++line_no;
    if (detail::trim(line).empty()) continue;
    const auto cells = detail::split(line, ',');
    if (rec.channel_names.empty()) {
      if (cells.empty() || cells[0] != "time") throw ParseError(line_no, "header must start with 'time'");
      std::size_t n = cells.size();
      if (cells.back() == "label") {
        labelled = true;
        --n;
      }
      if (n < 2) throw ParseError(line_no, "header names no channels");
      for (std::size_t i = 1; i < n; ++i) rec.channel_names.emplace_back(cells[i]);
      rec.channels.resize(rec.channel_names.size());
      continue;
    }
    const std::size_t expect = 1 + rec.channel_names.size() + (labelled ? 1 : 0);
    if (cells.size() != expect) {
      throw ParseError(line_no, "expected " + std::to_string(expect) + " fields, found " +
                                    std::to_string(cells.size()));
    }
    rec.time.push_back(detail::parse_or_throw<double>(cells[0], line_no, "time"));
    for (std::size_t c = 0; c < rec.channel_names.size(); ++c) {
      rec.channels[c].push_back(detail::parse_or_throw<double>(cells[c + 1], line_no, "sample"));
    }
    if (labelled) rec.labels.push_back(detail::parse_or_throw<int>(cells.back(), line_no, "label"));
  }
  if (rec.channel_names.empty()) throw ParseError(line_no, "missing header");
  if (rec.time.size() < 2) throw ParseError(line_no, "recording needs at least two rows");
  return rec;
}

inline Recording read_recording_file(const std::string& path) {
  std::ifstream in(path);
  if (!in) throw Error("cannot open '" + path + "'");
  return read_recording_csv(in);
}

inline void write_recording_csv(std::ostream& out, const Recording& rec) {
  out << "time";
  for (const auto& n : rec.channel_names) out << ',' << n;
  if (rec.has_labels()) out << ",label";
  out << '\n';
  for (std::size_t t = 0; t < rec.length(); ++t) {
    out << format_double(rec.time[t]);
    for (const auto& c : rec.channels) out << ',' << format_double(c[t]);
    if (rec.has_labels()) out << ',' << rec.labels[t];
    out << '\n';
  }
}

inline Recording to_recording(const LabeledStream& s) {
  Recording rec;
  for (std::size_t c = 0; c < s.data.channels(); ++c) {
    rec.channel_names.push_back("ch" + std::to_string(c + 1));
    auto ch = s.data.channel(c);
    rec.channels.emplace_back(ch.begin(), ch.end());
  }
  for (std::size_t t = 0; t < s.data.length(); ++t) rec.time.push_back(static_cast<double>(t) / s.sampling_rate);
  rec.labels = s.labels;
  return rec;
}

/// Generated samples as one concatenated recording: sample n occupies rows
/// n*T .. n*T+T-1 with time n*T + t and label = its class.
inline Recording dataset_recording(const std::vector<LabeledSample>& samples) {
  Recording rec;
  if (samples.empty()) return rec;
  const std::size_t d = samples.front().data.channels();
  for (std::size_t c = 0; c < d; ++c) rec.channel_names.push_back("ch" + std::to_string(c + 1));
  rec.channels.resize(d);
  std::size_t row = 0;
  for (const auto& s : samples) {
    if (s.data.channels() != d) throw ShapeMismatchError("samples differ in channel count");
    for (std::size_t t = 0; t < s.data.length(); ++t, ++row) {
      rec.time.push_back(static_cast<double>(row));
      for (std::size_t c = 0; c < d; ++c) rec.channels[c].push_back(s.data.channel(c)[t]);
      rec.labels.push_back(s.class_index());
    }
  }
  return rec;
}

/// Long-format curves: sample, class, channel, x, value, noiseless.
inline void write_sample_curves_csv(std::ostream& out, const SimConfig& cfg,
                                    const std::vector<LabeledSample>& samples,
                                    const std::vector<SimDraw>& draws) {
  out << "sample,class,channel,x,value,signal\n";
  for (std::size_t n = 0; n < samples.size(); ++n) {
    const auto& s = samples[n];
    const Grid& g = s.data.grid();
    for (std::size_t c = 0; c < s.data.channels(); ++c) {
      for (std::size_t t = 0; t < g.size(); ++t) {
        const double x = g.point(t);
        const double f = cfg.dataset == SimDataset::one ? dataset1_signal(draws[n], c, x)
                                                        : dataset2_signal(draws[n], c, x);
        out << n << ',' << s.class_index() << ',' << c + 1 << ',' << format_double(x) << ','
            << format_double(s.data.channel(c)[t]) << ',' << format_double(f) << '\n';
      }
    }
  }
}

// --- model coefficient dump ------------------------------------------------------
//
//   fnn-model 1
//   input_channels <d>
//   lle degree <p> orders <D> kernel quartic bandwidths <h0> ... <hD>
//   standardize
//   conv in <i> out <o> len <L> basis <family> <count> <lo> <hi> activation <act>
//   filter_coeffs <n>
//   <n values, row-major [in][out][basis]>
//   bias_coeffs <n>
//   <n values, row-major [out][basis]>
//   dense in <i> out <o> basis <family> <count> <lo> <hi> activation <act> output <scalar|functional>
//   weight_coeffs <n>
//   <n values>
//   bias <n>
//   <n values>
//   end

namespace detail {

inline void write_values(std::ostream& out, const char* name, const std::vector<double>& v) {
  out << name << ' ' << v.size() << '\n';
  for (std::size_t i = 0; i < v.size(); ++i) out << (i ? " " : "") << format_double(v[i]);
  out << '\n';
}

inline void write_basis(std::ostream& out, const BasisSpec& b) {
  out << " basis " << to_string(b.family) << ' ' << b.count << ' ' << format_double(b.lo) << ' '
      << format_double(b.hi);
}

class LineReader {
 public:
  explicit LineReader(std::istream& in) : in_(in) {}

  std::vector<std::string_view> next() {
    while (std::getline(in_, line_)) {
      ++no_;
      auto t = tokens(line_);
      if (!t.empty()) return t;
    }
    throw ParseError(no_, "unexpected end of model file");
  }
  std::size_t line() const noexcept { return no_; }

  [[noreturn]] void fail(const std::string& what) const { throw ParseError(no_, what); }

  void expect(std::string_view got, std::string_view want) const {
    if (got != want) fail("expected '" + std::string(want) + "', found '" + std::string(got) + "'");
  }

  std::size_t size(std::string_view s) const { return parse_or_throw<std::size_t>(s, no_, "count"); }

  std::vector<double> values(std::string_view name, std::size_t expected) {
    auto head = next();
    if (head.size() != 2) fail("malformed block header");
    expect(head[0], name);
    const std::size_t n = size(head[1]);
    if (n != expected) fail(std::string(name) + " holds " + std::to_string(n) + " values, expected " +
                            std::to_string(expected));
    std::vector<double> v;
    v.reserve(n);
    if (n == 0) return v;
    for (auto tok : next()) v.push_back(parse_or_throw<double>(tok, no_, "coefficient"));
    if (v.size() != n) fail("value count does not match block header");
    return v;
  }

 private:
  std::istream& in_;
  std::string line_;
  std::size_t no_ = 0;
};

/// Parses `key value key value ...` after the leading layer tag.
inline BasisSpec read_basis(const std::vector<std::string_view>& t, std::size_t at, const LineReader& r) {
  if (at + 4 >= t.size() || t[at] != "basis") r.fail("missing basis description");
  BasisSpec b;
  try {
    b.family = basis_family_from_string(std::string(t[at + 1]));
  } catch (const Error& e) {
    r.fail(e.what());
  }
  b.count = r.size(t[at + 2]);
  b.lo = parse_or_throw<double>(t[at + 3], r.line(), "basis bound");
  b.hi = parse_or_throw<double>(t[at + 4], r.line(), "basis bound");
  return b;
}

inline Activation read_activation(std::string_view s, const LineReader& r) {
  try {
    return activation_from_string(std::string(s));
  } catch (const Error& e) {
    r.fail(e.what());
  }
}

}  // namespace detail

inline void save_model(std::ostream& out, const Model& model) {
  out << "fnn-model 1\n";
  out << "input_channels " << model.input_channels() << '\n';
  for (const auto& l : model.layers()) {
    if (auto* lle = std::get_if<LleLayer>(&l)) {
      const auto& c = lle->config;
      out << "lle degree " << c.degree << " orders " << c.derivative_orders << " kernel quartic bandwidths";
      for (int h : c.bandwidths) out << ' ' << h;
      out << '\n';
    } else if (std::holds_alternative<StandardizeLayer>(l)) {
      out << "standardize\n";
    } else if (auto* conv = std::get_if<ConvLayer>(&l)) {
      const auto& p = conv->params;
      out << "conv in " << p.in_channels << " out " << p.out_channels << " len " << p.filter_len;
      detail::write_basis(out, p.basis);
      out << " activation " << to_string(p.activation) << '\n';
      detail::write_values(out, "filter_coeffs", p.filter_coeffs);
      detail::write_values(out, "bias_coeffs", p.bias_coeffs);
    } else if (auto* dense = std::get_if<DenseLayer>(&l)) {
      const auto& p = dense->params;
      out << "dense in " << p.in_channels << " out " << p.out_neurons;
      detail::write_basis(out, p.basis);
      out << " activation " << to_string(p.activation) << " output "
          << (p.functional_output ? "functional" : "scalar") << '\n';
      detail::write_values(out, "weight_coeffs", p.weight_coeffs);
      detail::write_values(out, "bias", p.bias);
    }
  }
  out << "end\n";
}

inline Model load_model(std::istream& in) {
  detail::LineReader r(in);
  auto t = r.next();
  if (t.size() != 2 || t[0] != "fnn-model" || t[1] != "1") r.fail("not an fnn-model version 1 file");
  t = r.next();
  if (t.size() != 2) r.fail("malformed input_channels line");
  r.expect(t[0], "input_channels");
  const std::size_t d = r.size(t[1]);

  std::vector<Layer> layers;
  for (;;) {
    t = r.next();
    if (t[0] == "end") break;
    if (t[0] == "lle") {
      if (t.size() < 9) r.fail("malformed lle line");
      LLEConfig c;
      r.expect(t[1], "degree");
      c.degree = detail::parse_or_throw<int>(t[2], r.line(), "degree");
      r.expect(t[3], "orders");
      c.derivative_orders = detail::parse_or_throw<int>(t[4], r.line(), "orders");
      r.expect(t[5], "kernel");
      r.expect(t[6], "quartic");
      r.expect(t[7], "bandwidths");
      c.bandwidths.clear();
      for (std::size_t i = 8; i < t.size(); ++i) {
        c.bandwidths.push_back(detail::parse_or_throw<int>(t[i], r.line(), "bandwidth"));
      }
      layers.emplace_back(LleLayer{c});
    } else if (t[0] == "standardize") {
      layers.emplace_back(StandardizeLayer{});
    } else if (t[0] == "conv") {
      if (t.size() != 14) r.fail("malformed conv line");
      r.expect(t[1], "in");
      r.expect(t[3], "out");
      r.expect(t[5], "len");
      r.expect(t[12], "activation");
      auto p = FuncConvParams::zeros(r.size(t[2]), r.size(t[4]), r.size(t[6]), detail::read_basis(t, 7, r),
                                     detail::read_activation(t[13], r));
      p.filter_coeffs = r.values("filter_coeffs", p.filter_coeffs.size());
      p.bias_coeffs = r.values("bias_coeffs", p.bias_coeffs.size());
      layers.emplace_back(ConvLayer{std::move(p)});
    } else if (t[0] == "dense") {
      if (t.size() != 14) r.fail("malformed dense line");
      r.expect(t[1], "in");
      r.expect(t[3], "out");
      r.expect(t[10], "activation");
      r.expect(t[12], "output");
      if (t[13] != "scalar" && t[13] != "functional") r.fail("output must be scalar or functional");
      auto p = FuncDenseParams::zeros(r.size(t[2]), r.size(t[4]), detail::read_basis(t, 5, r),
                                      detail::read_activation(t[11], r), t[13] == "functional");
      p.weight_coeffs = r.values("weight_coeffs", p.weight_coeffs.size());
      p.bias = r.values("bias", p.bias.size());
      layers.emplace_back(DenseLayer{std::move(p)});
    } else {
      r.fail("unknown layer '" + std::string(t[0]) + "'");
    }
  }
  try {
    return Model(d, std::move(layers));
  } catch (const Error& e) {
    r.fail(std::string("invalid model: ") + e.what());
  }
}

}  // namespace fnn
