#pragma once

#include <cstddef>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semstr/corrector.hpp"
#include "semstr/geometry.hpp"
#include "semstr/io.hpp"
#include "semstr/layout.hpp"

namespace semstr::pipeline {

struct PipelineParams {
  layout::LayoutParams layout;
  std::size_t ctc_beam = 8;  // 1 selects greedy decoding
  std::size_t corrector_beam = 1;
  std::size_t crop_height = 32;  // rectified crop height; width follows the aspect ratio
};

// Reads {"kappa_h", "kappa_v", "lambda", "ctc_beam", "corrector_beam",
// "crop_height"}; absent keys keep their defaults. Throws InputError on
// unknown keys or invalid values.
PipelineParams parse_params(const std::string& json);

struct PipelineInput {
  std::vector<io::BoxRecord> boxes;
  io::FrameSet frames;
  std::optional<geometry::GrayImage> image;
};

struct BoxResult {
  layout::BoxId id = 0;
  layout::GroupLabel group = 0;
  bool readable = false;  // frames were supplied
  std::string baseline;
  std::string corrected;
  std::optional<std::string> truth;
};

struct GroupResult {
  layout::GroupLabel label = 0;
  std::vector<layout::BoxId> order;
  std::string baseline_text;
  std::string corrected_text;
  bool corrected = false;            // the corrector ran on this group
  bool realignment_fallback = false;  // word counts differed; baseline words kept
  bool cap_hit = false;
  bool degraded = false;
};

struct Accuracy {
  std::size_t correct = 0;
  std::size_t total = 0;
  double value() const { return total == 0 ? 0.0 : static_cast<double>(correct) / static_cast<double>(total); }
};

struct WordAccuracy {
  Accuracy overall;
  std::map<layout::GroupLabel, Accuracy> per_group;
};

// Exact match after NFC normalization, case-sensitive. Every truth id counts;
// ids missing from pred are wrong. Throws InputError when truth is empty.
WordAccuracy evaluate(const std::map<layout::BoxId, std::string>& pred,
                      const std::map<layout::BoxId, std::string>& truth,
                      const std::map<layout::BoxId, layout::GroupLabel>& labels = {});

struct EvalReport {
  bool rectified = false;  // crops were produced from the supplied image
  std::size_t box_count = 0;
  std::size_t unreadable = 0;
  std::vector<GroupResult> groups;
  std::vector<BoxResult> boxes;  // sorted by id
  // Present when every readable box carries a ground-truth word.
  std::optional<WordAccuracy> baseline;
  std::optional<WordAccuracy> corrected;
};

struct RunOutput {
  EvalReport report;
  layout::DocumentLayout layout;
  std::map<layout::BoxId, geometry::GrayImage> crops;  // only when rectified
};

// Rectify (when an image is given), decode every box, group and arrange, and
// correct each group's phrase. model may be null, in which case corrected
// text equals the baseline.
RunOutput run(const PipelineInput& input, const seq2seq::CorrectorModel* model, const PipelineParams& params);

// "90.04%"
std::string format_percent(double fraction);
std::string format_report_json(const EvalReport& report);
std::string format_report_text(const EvalReport& report);

}  // namespace semstr::pipeline
