#pragma once

#include <cstdint>
#include <map>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "semstr/geometry.hpp"

namespace semstr::layout {

using BoxId = std::int64_t;
using GroupLabel = int;

struct Rect {
  double left = 0.0;
  double top = 0.0;
  double right = 0.0;
  double bottom = 0.0;

  static Rect bounding(const geometry::Quad& q);

  double width() const { return right - left; }
  double height() const { return bottom - top; }
  double center_x() const { return 0.5 * (left + right); }
  double center_y() const { return 0.5 * (top + bottom); }
};

struct TextBox {
  BoxId id = 0;
  Rect rect;
  std::optional<std::string> word;
};

struct GroupingParams {
  // Expansion of every rect, in multiples of the document median box height.
  double kappa_h = 1.0;
  double kappa_v = 0.7;
};

struct ArrangeParams {
  // Two boxes share a line when their vertical centers differ by less than
  // lambda * min(height).
  double lambda = 0.5;
};

struct LayoutParams {
  GroupingParams grouping;
  ArrangeParams arrange;
};

struct DocumentLayout {
  std::vector<TextBox> boxes;
  std::map<BoxId, GroupLabel> labels;
  // order[label] lists that group's ids in reading order.
  std::vector<std::vector<BoxId>> order;
};

// Throws InputError on empty rects or duplicate ids.
void validate_boxes(std::span<const TextBox> boxes);

// Median box height; mean of the two middle values for even counts.
double median_height(std::span<const TextBox> boxes);

bool same_group(const TextBox& a, const TextBox& b, const GroupingParams& params,
                double median_h);

// Flood-fill grouping. Labels are dense from 0, numbered in the order seeds
// are taken from the unlabeled queue (input order).
std::map<BoxId, GroupLabel> group(std::span<const TextBox> boxes, const GroupingParams& params);

// Index into `group_boxes` of the next box on current's line, if any.
std::optional<std::size_t> find_next_text(const TextBox& current,
                                          std::span<const TextBox> group_boxes,
                                          const ArrangeParams& params);

// Reading order of one group: left to right within a line, lines top to
// bottom. Always a permutation of the input ids.
std::vector<BoxId> arrange(std::span<const TextBox> group_boxes, const ArrangeParams& params);

DocumentLayout analyze(std::vector<TextBox> boxes, const LayoutParams& params);

// Debug raster: each group's rects filled with a distinct gray level.
geometry::GrayImage render_overlay(const DocumentLayout& layout, std::size_t width,
                                   std::size_t height);

}  // namespace semstr::layout
