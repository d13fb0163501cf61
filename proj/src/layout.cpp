#include "semstr/layout.hpp"

#include <algorithm>
#include <cmath>
#include <deque>
#include <numeric>
#include <tuple>
#include <unordered_set>

#include "semstr/errors.hpp"

namespace semstr::layout {

Rect Rect::bounding(const geometry::Quad& q) {
  Rect r{q.corners[0].x, q.corners[0].y, q.corners[0].x, q.corners[0].y};
  for (const auto& p : q.corners) {
    r.left = std::min(r.left, p.x);
    r.top = std::min(r.top, p.y);
    r.right = std::max(r.right, p.x);
    r.bottom = std::max(r.bottom, p.y);
  }
  return r;
}

void validate_boxes(std::span<const TextBox> boxes) {
  std::unordered_set<BoxId> seen;
  for (const auto& b : boxes) {
    if (!(b.rect.left < b.rect.right) || !(b.rect.top < b.rect.bottom))
      throw InputError("box " + std::to_string(b.id) + " has an empty rect");
    if (!seen.insert(b.id).second) throw InputError("duplicate box id " + std::to_string(b.id));
  }
}

double median_height(std::span<const TextBox> boxes) {
  if (boxes.empty()) return 0.0;
  std::vector<double> h;
  h.reserve(boxes.size());
  for (const auto& b : boxes) h.push_back(b.rect.height());
  std::sort(h.begin(), h.end());
  const size_t n = h.size();
  return n % 2 ? h[n / 2] : 0.5 * (h[n / 2 - 1] + h[n / 2]);
}

bool same_group(const TextBox& a, const TextBox& b, const GroupingParams& params,
                double median_h) {
  const double dx = params.kappa_h * median_h;
  const double dy = params.kappa_v * median_h;
  // Both rects grow by (dx, dy) on every side, so the gap test uses 2*dx, 2*dy.
  const bool overlap_x = a.rect.left - dx <= b.rect.right + dx && b.rect.left - dx <= a.rect.right + dx;
  const bool overlap_y = a.rect.top - dy <= b.rect.bottom + dy && b.rect.top - dy <= a.rect.bottom + dy;
  return overlap_x && overlap_y;
}

std::map<BoxId, GroupLabel> group(std::span<const TextBox> boxes, const GroupingParams& params) {
  std::map<BoxId, GroupLabel> labels;
  if (boxes.empty()) return labels;
  const double m = median_height(boxes);

  std::deque<size_t> unlabeled(boxes.size());
  std::iota(unlabeled.begin(), unlabeled.end(), size_t{0});
  std::deque<std::pair<size_t, GroupLabel>> frontier;
  GroupLabel label = 0;

  auto seed_next = [&]() {
    const size_t b = unlabeled.front();
    unlabeled.pop_front();
    frontier.emplace_back(b, label);
    labels[boxes[b].id] = label;
  };
  seed_next();

  while (!frontier.empty()) {
    const auto [seed, seed_label] = frontier.front();
    frontier.pop_front();
    std::deque<size_t> pending;
    pending.swap(unlabeled);
    while (!pending.empty()) {
      const size_t b = pending.front();
      pending.pop_front();
      if (same_group(boxes[seed], boxes[b], params, m)) {
        frontier.emplace_back(b, seed_label);
        labels[boxes[b].id] = seed_label;
      } else {
        unlabeled.push_back(b);
      }
    }
    if (!unlabeled.empty() && frontier.empty()) {
      ++label;
      seed_next();
    }
  }
  return labels;
}

std::optional<std::size_t> find_next_text(const TextBox& current,
                                          std::span<const TextBox> group_boxes,
                                          const ArrangeParams& params) {
  std::optional<size_t> best;
  for (size_t i = 0; i < group_boxes.size(); ++i) {
    const TextBox& c = group_boxes[i];
    if (c.id == current.id) continue;
    const double tol = params.lambda * std::min(current.rect.height(), c.rect.height());
    if (!(std::abs(c.rect.center_y() - current.rect.center_y()) < tol)) continue;
    if (!(c.rect.left >= current.rect.center_x())) continue;
    if (!best) {
      best = i;
      continue;
    }
    const TextBox& b = group_boxes[*best];
    if (std::make_tuple(c.rect.left, c.rect.center_y(), c.id) <
        std::make_tuple(b.rect.left, b.rect.center_y(), b.id))
      best = i;
  }
  return best;
}

std::vector<BoxId> arrange(std::span<const TextBox> group_boxes, const ArrangeParams& params) {
  const size_t n = group_boxes.size();
  if (n == 0) return {};

  // Chain of box indices starting from every box.
  std::vector<std::vector<size_t>> chains(n);
  std::vector<bool> is_successor(n, false);
  for (size_t start = 0; start < n; ++start) {
    size_t cur = start;
    chains[start].push_back(cur);
    // Left edges strictly increase along a chain, so it always terminates.
    while (auto next = find_next_text(group_boxes[cur], group_boxes, params)) {
      cur = *next;
      chains[start].push_back(cur);
    }
    for (size_t k = 1; k < chains[start].size(); ++k) is_successor[chains[start][k]] = true;
  }

  // A chain started at a box reachable from another box is a proper suffix of
  // that box's chain; keep only chains started at line heads.
  std::vector<std::vector<size_t>> lines;
  for (size_t i = 0; i < n; ++i)
    if (!is_successor[i]) lines.push_back(chains[i]);

  auto mean_center = [&](const std::vector<size_t>& line) {
    double s = 0.0;
    for (size_t i : line) s += group_boxes[i].rect.center_y();
    return s / static_cast<double>(line.size());
  };

  // Distinct heads may still merge into a shared tail when boxes overlap.
  // Longer lines claim contested boxes first.
  std::sort(lines.begin(), lines.end(), [&](const auto& a, const auto& b) {
    if (a.size() != b.size()) return a.size() > b.size();
    const double ma = mean_center(a), mb = mean_center(b);
    if (ma != mb) return ma < mb;
    return group_boxes[a.front()].id < group_boxes[b.front()].id;
  });
  std::vector<bool> claimed(n, false);
  std::vector<std::vector<size_t>> kept;
  for (const auto& line : lines) {
    std::vector<size_t> own;
    for (size_t i : line) {
      if (!claimed[i]) {
        claimed[i] = true;
        own.push_back(i);
      }
    }
    if (!own.empty()) kept.push_back(std::move(own));
  }

  std::sort(kept.begin(), kept.end(), [&](const auto& a, const auto& b) {
    const double ma = mean_center(a), mb = mean_center(b);
    if (ma != mb) return ma < mb;
    const double la = group_boxes[a.front()].rect.left, lb = group_boxes[b.front()].rect.left;
    if (la != lb) return la < lb;
    return group_boxes[a.front()].id < group_boxes[b.front()].id;
  });

  std::vector<BoxId> order;
  order.reserve(n);
  for (const auto& line : kept)
    for (size_t i : line) order.push_back(group_boxes[i].id);
  return order;
}

DocumentLayout analyze(std::vector<TextBox> boxes, const LayoutParams& params) {
  validate_boxes(boxes);
  DocumentLayout doc;
  doc.labels = group(boxes, params.grouping);
  doc.boxes = std::move(boxes);

  GroupLabel count = 0;
  for (const auto& [id, label] : doc.labels) count = std::max(count, label + 1);
  std::vector<std::vector<TextBox>> members(static_cast<size_t>(count));
  for (const auto& b : doc.boxes) members[static_cast<size_t>(doc.labels.at(b.id))].push_back(b);
  doc.order.reserve(members.size());
  for (const auto& m : members) doc.order.push_back(arrange(m, params.arrange));
  return doc;
}

geometry::GrayImage render_overlay(const DocumentLayout& layout, std::size_t width,
                                   std::size_t height) {
  geometry::GrayImage img(width, height, 1.0);
  const double groups = static_cast<double>(std::max<size_t>(layout.order.size(), 1));
  for (const auto& b : layout.boxes) {
    const auto label = layout.labels.at(b.id);
    const double shade = 0.15 + 0.7 * static_cast<double>(label) / groups;
    const auto x0 = static_cast<long>(std::floor(std::max(0.0, b.rect.left)));
    const auto y0 = static_cast<long>(std::floor(std::max(0.0, b.rect.top)));
    const auto x1 = std::min(static_cast<long>(width), static_cast<long>(std::ceil(b.rect.right)));
    const auto y1 = std::min(static_cast<long>(height), static_cast<long>(std::ceil(b.rect.bottom)));
    for (long y = y0; y < y1; ++y)
      for (long x = x0; x < x1; ++x) img.at(static_cast<size_t>(x), static_cast<size_t>(y)) = shade;
  }
  return img;
}

}  // namespace semstr::layout
