#pragma once

#include <cstdint>
#include <filesystem>
#include <span>
#include <string>
#include <string_view>
#include <vector>

namespace clens {

/// Class-conditional probabilities of one model run on one dataset,
/// laid out [epoch][sample][class]. Epochs are addressed 1..n_epochs:
/// epoch t is the t-th logged snapshot.
struct ProbLog {
  std::string model_id;
  std::uint32_t n_epochs = 0;
  std::uint32_t n_samples = 0;
  std::uint32_t n_classes = 0;
  std::vector<float> probs;

  std::span<const float> row(std::uint32_t epoch, std::size_t sample) const {
    const std::size_t offset =
        ((static_cast<std::size_t>(epoch) - 1) * n_samples + sample) * n_classes;
    return {probs.data() + offset, n_classes};
  }
  std::span<float> row(std::uint32_t epoch, std::size_t sample) {
    const std::size_t offset =
        ((static_cast<std::size_t>(epoch) - 1) * n_samples + sample) * n_classes;
    return {probs.data() + offset, n_classes};
  }

  std::size_t value_count() const {
    return static_cast<std::size_t>(n_epochs) * n_samples * n_classes;
  }
};

inline constexpr double kRowSumTolerance = 1e-3;
inline constexpr double kRenormalizeThreshold = 1e-6;
inline constexpr std::uint32_t kCplVersion = 1;

/// Checks dims, rejects negative / non-finite entries and rows whose sum
/// deviates from 1 by more than kRowSumTolerance, then divides by its sum
/// every row that is off by more than kRenormalizeThreshold.
void validate_and_normalize(ProbLog& log);

/// Serialized CPL bytes: "CPL1", u32 version, u32 T, u32 N, u32 C,
/// u16 id length + id, then T*N*C little-endian f32.
std::string encode_cpl(const ProbLog& log);
ProbLog decode_cpl(std::string_view bytes);

ProbLog read_cpl(const std::filesystem::path& path);
void write_cpl(const ProbLog& log, const std::filesystem::path& path);

std::size_t cpl_file_size(const ProbLog& log);

using LabelVec = std::vector<std::uint32_t>;

/// Headerless CSV, one class index per line ('#' lines ignored).
LabelVec read_labels(const std::filesystem::path& path, std::size_t expected_n,
                     std::uint32_t n_classes);
LabelVec parse_labels(std::string_view text, std::size_t expected_n, std::uint32_t n_classes);
std::string format_labels(const LabelVec& labels);

struct MetricsRow {
  std::uint32_t epoch = 0;
  std::string dataset;
  double loss = 0.0;
  double accuracy = 0.0;
};

struct MetricsSeries {
  std::vector<MetricsRow> rows;

  /// Rows of one dataset in file order.
  std::vector<MetricsRow> for_dataset(std::string_view dataset) const;
  std::vector<std::string> datasets() const;
};

/// Epochs strictly increasing per dataset, accuracy in [0, 1], loss >= 0.
void validate_metrics(const MetricsSeries& metrics);

MetricsSeries parse_metrics(std::string_view text);
MetricsSeries read_metrics(const std::filesystem::path& path);
/// CSV with header `epoch,dataset,loss,accuracy`.
std::string format_metrics(const MetricsSeries& metrics);

// Little-endian helpers shared by the binary tensor formats.
namespace le {
void put_u16(std::string& out, std::uint16_t v);
void put_u32(std::string& out, std::uint32_t v);
void put_f32(std::string& out, float v);
std::uint16_t get_u16(const unsigned char* p);
std::uint32_t get_u32(const unsigned char* p);
float get_f32(const unsigned char* p);
}  // namespace le

}  // namespace clens
