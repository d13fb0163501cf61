#include "semstr/pipeline.hpp"

#include <algorithm>
#include <cmath>
#include <cstdio>
#include <set>
#include <sstream>

#include <json.hpp>

#include "semstr/ctc.hpp"
#include "semstr/errors.hpp"
#include "semstr/text.hpp"

namespace semstr::pipeline {
namespace {

using nlohmann::json;

json accuracy_json(const Accuracy& a) {
  return {{"correct", a.correct}, {"total", a.total}, {"accuracy", a.value()}, {"percent", format_percent(a.value())}};
}

std::vector<std::string> words_of(const std::string& s) {
  std::vector<std::string> out;
  for (auto& w : text::split(s, ' ')) out.push_back(std::move(w));
  return out;
}

}  // namespace

PipelineParams parse_params(const std::string& text) {
  PipelineParams p;
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw InputError(std::string("malformed params: ") + e.what());
  }
  if (!j.is_object()) throw InputError("params must be a JSON object");
  try {
    for (const auto& [key, value] : j.items()) {
      if (key == "kappa_h") p.layout.grouping.kappa_h = value.get<double>();
      else if (key == "kappa_v") p.layout.grouping.kappa_v = value.get<double>();
      else if (key == "lambda") p.layout.arrange.lambda = value.get<double>();
      else if (key == "ctc_beam") p.ctc_beam = value.get<std::size_t>();
      else if (key == "corrector_beam") p.corrector_beam = value.get<std::size_t>();
      else if (key == "crop_height") p.crop_height = value.get<std::size_t>();
      else throw InputError("unknown parameter '" + key + "'");
    }
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed params: ") + e.what());
  }
  if (!(p.layout.grouping.kappa_h >= 0.0) || !(p.layout.grouping.kappa_v >= 0.0))
    throw InputError("kappa_h and kappa_v must be nonnegative");
  if (!(p.layout.arrange.lambda > 0.0)) throw InputError("lambda must be positive");
  if (p.ctc_beam < 1 || p.corrector_beam < 1) throw InputError("beam widths must be at least 1");
  if (p.crop_height < 1) throw InputError("crop_height must be at least 1");
  return p;
}

WordAccuracy evaluate(const std::map<layout::BoxId, std::string>& pred,
                      const std::map<layout::BoxId, std::string>& truth,
                      const std::map<layout::BoxId, layout::GroupLabel>& labels) {
  if (truth.empty()) throw InputError("evaluation needs at least one ground-truth word");
  WordAccuracy acc;
  for (const auto& [id, word] : truth) {
    auto it = pred.find(id);
    const bool ok = it != pred.end() && text::nfc(it->second) == text::nfc(word);
    acc.overall.total += 1;
    acc.overall.correct += ok ? 1 : 0;
    if (auto l = labels.find(id); l != labels.end()) {
      auto& g = acc.per_group[l->second];
      g.total += 1;
      g.correct += ok ? 1 : 0;
    }
  }
  return acc;
}

RunOutput run(const PipelineInput& input, const seq2seq::CorrectorModel* model, const PipelineParams& params) {
  RunOutput out;
  std::set<layout::BoxId> ids;
  for (const auto& b : input.boxes) ids.insert(b.box.id);
  for (const auto& [id, x] : input.frames.frames)
    if (!ids.count(id)) throw InputError("frames given for unknown box " + std::to_string(id));

  if (input.image) {
    if (input.image->empty()) throw InputError("image is empty");
    for (const auto& b : input.boxes) {
      const geometry::Quad q = b.quad ? *b.quad
                                      : geometry::Quad::from_rect(b.box.rect.left, b.box.rect.top, b.box.rect.right,
                                                                  b.box.rect.bottom);
      const double w = 0.5 * (std::hypot(q.corners[1].x - q.corners[0].x, q.corners[1].y - q.corners[0].y) +
                              std::hypot(q.corners[2].x - q.corners[3].x, q.corners[2].y - q.corners[3].y));
      const double h = 0.5 * (std::hypot(q.corners[3].x - q.corners[0].x, q.corners[3].y - q.corners[0].y) +
                              std::hypot(q.corners[2].x - q.corners[1].x, q.corners[2].y - q.corners[1].y));
      const auto dst_h = params.crop_height;
      const auto dst_w = static_cast<std::size_t>(std::max(1.0, std::round(static_cast<double>(dst_h) * w / h)));
      out.crops.emplace(b.box.id, geometry::rectify(*input.image, q, dst_w, dst_h));
    }
    out.report.rectified = true;
  }

  std::vector<layout::TextBox> boxes;
  for (const auto& b : input.boxes) boxes.push_back(b.box);
  out.layout = layout::analyze(boxes, params.layout);

  std::map<layout::BoxId, BoxResult> results;
  for (const auto& b : input.boxes) {
    BoxResult r;
    r.id = b.box.id;
    r.group = out.layout.labels.at(b.box.id);
    r.truth = b.box.word;
    auto it = input.frames.frames.find(b.box.id);
    if (it != input.frames.frames.end()) {
      r.readable = true;
      const auto label = params.ctc_beam == 1 ? ctc::greedy_decode(it->second)
                                              : ctc::beam_decode(it->second, params.ctc_beam);
      r.baseline = ctc::decode_label(label, input.frames.alphabet);
      r.corrected = r.baseline;
    }
    results.emplace(r.id, std::move(r));
  }

  for (size_t g = 0; g < out.layout.order.size(); ++g) {
    GroupResult gr;
    gr.label = static_cast<layout::GroupLabel>(g);
    gr.order = out.layout.order[g];
    std::vector<layout::BoxId> slots;
    std::vector<std::string> words;
    for (auto id : gr.order) {
      const auto& r = results.at(id);
      if (r.readable && !r.baseline.empty()) {
        slots.push_back(id);
        words.push_back(r.baseline);
      }
    }
    gr.baseline_text = text::join(words, " ");
    gr.corrected_text = gr.baseline_text;
    if (model && !words.empty()) {
      const auto c = seq2seq::correct(*model, gr.baseline_text, params.corrector_beam);
      gr.corrected = true;
      gr.corrected_text = c.text;
      gr.cap_hit = c.cap_hit;
      gr.degraded = c.degraded;
      const auto fixed = words_of(c.text);
      const bool aligned = fixed.size() == slots.size() &&
                           std::none_of(fixed.begin(), fixed.end(), [](const auto& w) { return w.empty(); });
      if (aligned) {
        for (size_t i = 0; i < slots.size(); ++i) results.at(slots[i]).corrected = fixed[i];
      } else {
        gr.realignment_fallback = true;
      }
    }
    out.report.groups.push_back(std::move(gr));
  }

  out.report.box_count = results.size();
  std::map<layout::BoxId, std::string> truth, base, fixed;
  bool all_truth = true;
  for (auto& [id, r] : results) {
    if (!r.readable) {
      ++out.report.unreadable;
    } else if (r.truth) {
      truth[id] = *r.truth;
      base[id] = r.baseline;
      fixed[id] = r.corrected;
    } else {
      all_truth = false;
    }
    out.report.boxes.push_back(r);
  }
  if (all_truth && !truth.empty()) {
    out.report.baseline = evaluate(base, truth, out.layout.labels);
    out.report.corrected = evaluate(fixed, truth, out.layout.labels);
  }
  return out;
}

std::string format_percent(double fraction) {
  char buf[32];
  std::snprintf(buf, sizeof buf, "%.2f%%", 100.0 * fraction);
  return buf;
}

std::string format_report_json(const EvalReport& report) {
  json groups = json::array();
  for (const auto& g : report.groups) {
    json jg{{"label", g.label},
            {"order", g.order},
            {"baseline", g.baseline_text},
            {"corrected", g.corrected_text},
            {"corrector_ran", g.corrected},
            {"realignment_fallback", g.realignment_fallback},
            {"cap_hit", g.cap_hit},
            {"degraded", g.degraded}};
    if (report.baseline) {
      if (auto it = report.baseline->per_group.find(g.label); it != report.baseline->per_group.end())
        jg["baseline_accuracy"] = accuracy_json(it->second);
      if (auto it = report.corrected->per_group.find(g.label); it != report.corrected->per_group.end())
        jg["corrected_accuracy"] = accuracy_json(it->second);
    }
    groups.push_back(std::move(jg));
  }
  json boxes = json::array();
  for (const auto& b : report.boxes) {
    json jb{{"id", b.id}, {"group", b.group}, {"readable", b.readable}};
    if (b.readable) {
      jb["baseline"] = b.baseline;
      jb["corrected"] = b.corrected;
    }
    if (b.truth) jb["truth"] = *b.truth;
    boxes.push_back(std::move(jb));
  }
  json j{{"rectified", report.rectified},
         {"box_count", report.box_count},
         {"unreadable", report.unreadable},
         {"groups", groups},
         {"boxes", boxes}};
  if (report.baseline) {
    j["baseline_accuracy"] = accuracy_json(report.baseline->overall);
    j["corrected_accuracy"] = accuracy_json(report.corrected->overall);
    j["delta"] = report.corrected->overall.value() - report.baseline->overall.value();
  }
  return j.dump(2) + "\n";
}

std::string format_report_text(const EvalReport& report) {
  std::ostringstream os;
  os << "boxes: " << report.box_count << " (unreadable " << report.unreadable << ")"
     << (report.rectified ? ", rectified" : "") << "\n";
  for (const auto& g : report.groups) {
    os << "group " << g.label << ": " << g.baseline_text;
    if (g.corrected) os << "  ->  " << g.corrected_text;
    if (g.realignment_fallback) os << "  [realignment fallback]";
    if (g.cap_hit) os << "  [length cap]";
    if (g.degraded) os << "  [degraded]";
    os << "\n";
  }
  if (report.baseline) {
    const auto& b = report.baseline->overall;
    const auto& c = report.corrected->overall;
    os << "baseline word accuracy:  " << format_percent(b.value()) << " (" << b.correct << "/" << b.total << ")\n";
    os << "corrected word accuracy: " << format_percent(c.value()) << " (" << c.correct << "/" << c.total << ")\n";
  }
  return os.str();
}

}  // namespace semstr::pipeline
