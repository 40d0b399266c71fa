#include "clens/proba_log.hpp"

#include <algorithm>
#include <bit>
#include <cmath>
#include <cstring>
#include <limits>
#include <map>

#include "clens/error.hpp"
#include "clens/io.hpp"

namespace clens {

namespace le {

void put_u16(std::string& out, std::uint16_t v) {
  out.push_back(static_cast<char>(v & 0xff));
  out.push_back(static_cast<char>(v >> 8));
}

void put_u32(std::string& out, std::uint32_t v) {
  for (int shift = 0; shift < 32; shift += 8) out.push_back(static_cast<char>((v >> shift) & 0xff));
}

void put_f32(std::string& out, float v) { put_u32(out, std::bit_cast<std::uint32_t>(v)); }

std::uint16_t get_u16(const unsigned char* p) {
  return static_cast<std::uint16_t>(p[0] | (p[1] << 8));
}

std::uint32_t get_u32(const unsigned char* p) {
  return static_cast<std::uint32_t>(p[0]) | (static_cast<std::uint32_t>(p[1]) << 8) |
         (static_cast<std::uint32_t>(p[2]) << 16) | (static_cast<std::uint32_t>(p[3]) << 24);
}

float get_f32(const unsigned char* p) { return std::bit_cast<float>(get_u32(p)); }

}  // namespace le

namespace {

constexpr std::string_view kMagic = "CPL1";
constexpr std::size_t kFixedHeader = 4 + 4 * 4 + 2;

void check_dims(const ProbLog& log) {
  if (log.n_epochs == 0 || log.n_samples == 0 || log.n_classes == 0) {
    throw Error(ErrorCode::DimensionZero,
                "log '" + log.model_id + "' has a zero dimension (T=" +
                    std::to_string(log.n_epochs) + ", N=" + std::to_string(log.n_samples) +
                    ", C=" + std::to_string(log.n_classes) + ")");
  }
  if (log.n_classes < 2) {
    throw Error(ErrorCode::DimensionZero, "log '" + log.model_id + "' needs at least 2 classes");
  }
}

}  // namespace

void validate_and_normalize(ProbLog& log) {
  check_dims(log);
  if (log.probs.size() != log.value_count()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor size does not match header dims");
  }
  const std::size_t rows = static_cast<std::size_t>(log.n_epochs) * log.n_samples;
  const std::size_t c = log.n_classes;
  for (std::size_t r = 0; r < rows; ++r) {
    float* row = log.probs.data() + r * c;
    double sum = 0.0;
    for (std::size_t j = 0; j < c; ++j) {
      const float v = row[j];
      if (!(v >= 0.0f) || !std::isfinite(v)) {
        throw Error(ErrorCode::NegativeProbability,
                    "row " + std::to_string(r) + " has a negative or non-finite entry");
      }
      sum += v;
    }
    if (std::fabs(sum - 1.0) > kRowSumTolerance) {
      throw Error(ErrorCode::RowSumOutOfTolerance,
                  "row " + std::to_string(r) + " (epoch " + std::to_string(r / log.n_samples + 1) +
                      ", sample " + std::to_string(r % log.n_samples) + ") sums to " +
                      format_number(sum));
    }
    // Rows already normalized to f32 precision stay bitwise as written.
    if (std::fabs(sum - 1.0) <= kRenormalizeThreshold) continue;
    for (std::size_t j = 0; j < c; ++j) {
      row[j] = static_cast<float>(static_cast<double>(row[j]) / sum);
    }
  }
}

std::size_t cpl_file_size(const ProbLog& log) {
  return kFixedHeader + log.model_id.size() + 4 * log.value_count();
}

std::string encode_cpl(const ProbLog& log) {
  check_dims(log);
  if (log.probs.size() != log.value_count()) {
    throw Error(ErrorCode::ShapeMismatch, "tensor size does not match header dims");
  }
  if (log.model_id.size() > std::numeric_limits<std::uint16_t>::max()) {
    throw Error(ErrorCode::ShapeMismatch, "model_id longer than 65535 bytes");
  }
  std::string out;
  out.reserve(cpl_file_size(log));
  out += kMagic;
  le::put_u32(out, kCplVersion);
  le::put_u32(out, log.n_epochs);
  le::put_u32(out, log.n_samples);
  le::put_u32(out, log.n_classes);
  le::put_u16(out, static_cast<std::uint16_t>(log.model_id.size()));
  out += log.model_id;
  for (float v : log.probs) le::put_f32(out, v);
  return out;
}

ProbLog decode_cpl(std::string_view bytes) {
  if (bytes.size() < kMagic.size() || bytes.substr(0, kMagic.size()) != kMagic) {
    throw Error(ErrorCode::BadMagic, "not a CPL file");
  }
  if (bytes.size() < kFixedHeader) throw Error(ErrorCode::TruncatedFile, "header truncated");
  const auto* p = reinterpret_cast<const unsigned char*>(bytes.data());
  const std::uint32_t version = le::get_u32(p + 4);
  if (version != kCplVersion) {
    throw Error(ErrorCode::UnsupportedVersion, "CPL version " + std::to_string(version));
  }
  ProbLog log;
  log.n_epochs = le::get_u32(p + 8);
  log.n_samples = le::get_u32(p + 12);
  log.n_classes = le::get_u32(p + 16);
  const std::uint16_t id_len = le::get_u16(p + 20);
  if (bytes.size() < kFixedHeader + id_len) throw Error(ErrorCode::TruncatedFile, "model_id truncated");
  log.model_id.assign(bytes.substr(kFixedHeader, id_len));
  check_dims(log);

  const std::size_t count = log.value_count();
  const std::size_t payload = bytes.size() - kFixedHeader - id_len;
  if (payload / 4 < count) {
    throw Error(ErrorCode::TruncatedFile, "expected " + std::to_string(count) +
                                              " values, file holds " + std::to_string(payload / 4));
  }
  if (payload != count * 4) throw Error(ErrorCode::TrailingData, "bytes after the tensor payload");

  log.probs.resize(count);
  const unsigned char* data = p + kFixedHeader + id_len;
  if constexpr (std::endian::native == std::endian::little) {
    std::memcpy(log.probs.data(), data, count * 4);
  } else {
    for (std::size_t i = 0; i < count; ++i) log.probs[i] = le::get_f32(data + 4 * i);
  }
  validate_and_normalize(log);
  return log;
}

ProbLog read_cpl(const std::filesystem::path& path) { return decode_cpl(read_file(path)); }

void write_cpl(const ProbLog& log, const std::filesystem::path& path) {
  write_file_atomic(path, encode_cpl(log));
}

LabelVec parse_labels(std::string_view text, std::size_t expected_n, std::uint32_t n_classes) {
  LabelVec labels;
  for (const auto& line : data_lines(text)) {
    const std::uint64_t v = parse_uint(line, "label");
    if (v >= n_classes) {
      throw Error(ErrorCode::ClassOutOfRange, "label " + line + " with C=" + std::to_string(n_classes));
    }
    labels.push_back(static_cast<std::uint32_t>(v));
  }
  if (labels.size() != expected_n) {
    throw Error(ErrorCode::LengthMismatch, "expected " + std::to_string(expected_n) + " labels, got " +
                                               std::to_string(labels.size()));
  }
  return labels;
}

LabelVec read_labels(const std::filesystem::path& path, std::size_t expected_n,
                     std::uint32_t n_classes) {
  return parse_labels(read_file(path), expected_n, n_classes);
}

std::string format_labels(const LabelVec& labels) {
  std::string out;
  for (auto v : labels) {
    out += std::to_string(v);
    out += '\n';
  }
  return out;
}

std::vector<MetricsRow> MetricsSeries::for_dataset(std::string_view dataset) const {
  std::vector<MetricsRow> out;
  for (const auto& row : rows) {
    if (row.dataset == dataset) out.push_back(row);
  }
  return out;
}

std::vector<std::string> MetricsSeries::datasets() const {
  std::vector<std::string> names;
  for (const auto& row : rows) {
    if (std::find(names.begin(), names.end(), row.dataset) == names.end()) names.push_back(row.dataset);
  }
  return names;
}

void validate_metrics(const MetricsSeries& metrics) {
  std::map<std::string, std::uint32_t> last_epoch;
  for (const auto& row : metrics.rows) {
    if (!(row.accuracy >= 0.0 && row.accuracy <= 1.0)) {
      throw Error(ErrorCode::InvalidMetrics, "accuracy outside [0,1] at epoch " + std::to_string(row.epoch));
    }
    if (!(row.loss >= 0.0)) {
      throw Error(ErrorCode::InvalidMetrics, "negative loss at epoch " + std::to_string(row.epoch));
    }
    auto [it, inserted] = last_epoch.try_emplace(row.dataset, row.epoch);
    if (!inserted) {
      if (row.epoch <= it->second) {
        throw Error(ErrorCode::InvalidMetrics, "epochs not strictly increasing for " + row.dataset);
      }
      it->second = row.epoch;
    }
  }
}

MetricsSeries parse_metrics(std::string_view text) {
  MetricsSeries series;
  const auto lines = data_lines(text);
  if (lines.empty() || lines.front() != "epoch,dataset,loss,accuracy") {
    throw Error(ErrorCode::ParseError, "metrics CSV must start with header epoch,dataset,loss,accuracy");
  }
  for (std::size_t i = 1; i < lines.size(); ++i) {
    const auto fields = split(lines[i], ',');
    if (fields.size() != 4) throw Error(ErrorCode::ParseError, "metrics row needs 4 fields: " + lines[i]);
    MetricsRow row;
    row.epoch = static_cast<std::uint32_t>(parse_uint(fields[0], "epoch"));
    row.dataset = std::string(trim(fields[1]));
    row.loss = parse_double(fields[2], "loss");
    row.accuracy = parse_double(fields[3], "accuracy");
    series.rows.push_back(std::move(row));
  }
  validate_metrics(series);
  return series;
}

MetricsSeries read_metrics(const std::filesystem::path& path) { return parse_metrics(read_file(path)); }

std::string format_metrics(const MetricsSeries& metrics) {
  std::string out = "epoch,dataset,loss,accuracy\n";
  for (const auto& row : metrics.rows) {
    out += std::to_string(row.epoch) + ',' + row.dataset + ',' + format_number(row.loss) + ',' +
           format_number(row.accuracy) + '\n';
  }
  return out;
}

}  // namespace clens
