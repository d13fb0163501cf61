#pragma once

#include <filesystem>
#include <map>
#include <optional>
#include <string>
#include <vector>

#include "semstr/corrector.hpp"
#include "semstr/ctc.hpp"
#include "semstr/geometry.hpp"
#include "semstr/layout.hpp"
#include "semstr/trainer.hpp"

namespace semstr::io {

inline constexpr const char* kCheckpointFormat = "semstr-corrector";
inline constexpr int kCheckpointVersion = 1;

// One line of the box file: {"id", "quad": [[x,y] x4]} or {"id", "rect":
// [l,t,r,b]}, plus an optional ground-truth "word".
struct BoxRecord {
  layout::TextBox box;  // rect is the quad's bounding box when a quad is given
  std::optional<geometry::Quad> quad;
};

std::vector<BoxRecord> parse_boxes(const std::string& jsonl);
std::vector<BoxRecord> read_boxes(const std::filesystem::path& path);
std::string format_boxes(const std::vector<BoxRecord>& boxes);

// First line {"alphabet": "..."}, then {"box_id", "frames": [[...], ...]}.
struct FrameSet {
  ctc::Alphabet alphabet;
  std::map<layout::BoxId, ctc::FrameProbs> frames;
};

FrameSet parse_frames(const std::string& jsonl);
FrameSet read_frames(const std::filesystem::path& path);
std::string format_frames(const FrameSet& set);

std::vector<seq2seq::PhrasePair> parse_corpus(const std::string& jsonl);
std::vector<seq2seq::PhrasePair> read_corpus(const std::filesystem::path& path);
std::string format_corpus(const std::vector<seq2seq::PhrasePair>& corpus);

// {"labels": {"id": label, ...}, "order": [[id, ...], ...]}
std::string format_layout(const layout::DocumentLayout& layout);
std::map<layout::BoxId, layout::GroupLabel> parse_labels(const std::string& json);

// Bit-exact round trip: doubles are written in shortest round-trip form.
std::string format_checkpoint(const seq2seq::CorrectorModel& model);
// Throws MalformedCheckpointError on bad JSON or shapes and
// VersionMismatchError on an unknown version.
seq2seq::CorrectorModel parse_checkpoint(const std::string& json);
void save_checkpoint(const seq2seq::CorrectorModel& model, const std::filesystem::path& path);
seq2seq::CorrectorModel load_checkpoint(const std::filesystem::path& path);

std::string read_text(const std::filesystem::path& path);
// Writes to a sibling temporary and renames it into place.
void write_text(const std::filesystem::path& path, const std::string& content);

}  // namespace semstr::io
