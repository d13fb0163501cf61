#include "semstr/io.hpp"

#include <cmath>
#include <fstream>
#include <sstream>

#include <json.hpp>

#include "semstr/errors.hpp"
#include "semstr/text.hpp"

namespace semstr::io {
namespace {

using nlohmann::json;

template <typename F>
void for_each_line(const std::string& jsonl, F&& f) {
  std::istringstream in(jsonl);
  std::string line;
  size_t lineno = 0;
  while (std::getline(in, line)) {
    ++lineno;
    if (text::trim(line).empty()) continue;
    json j;
    try {
      j = json::parse(line);
    } catch (const json::parse_error& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    }
    try {
      f(j, lineno);
    } catch (const json::exception& e) {
      throw InputError("line " + std::to_string(lineno) + ": " + e.what());
    }
  }
}

double finite(const json& v, const char* what) {
  const double x = v.get<double>();
  if (!std::isfinite(x)) throw InputError(std::string(what) + " must be finite");
  return x;
}

json matrix_to_json(const Eigen::Ref<const Eigen::MatrixXd>& m) {
  json rows = json::array();
  for (Eigen::Index r = 0; r < m.rows(); ++r) {
    json row = json::array();
    for (Eigen::Index c = 0; c < m.cols(); ++c) row.push_back(m(r, c));
    rows.push_back(std::move(row));
  }
  return rows;
}

}  // namespace

std::vector<BoxRecord> parse_boxes(const std::string& jsonl) {
  std::vector<BoxRecord> out;
  for_each_line(jsonl, [&](const json& j, size_t lineno) {
    BoxRecord rec;
    rec.box.id = j.at("id").get<layout::BoxId>();
    if (j.contains("quad")) {
      const auto& q = j.at("quad");
      if (!q.is_array() || q.size() != 4) throw InputError("line " + std::to_string(lineno) + ": quad needs 4 corners");
      geometry::Quad quad;
      for (size_t i = 0; i < 4; ++i) {
        if (!q[i].is_array() || q[i].size() != 2)
          throw InputError("line " + std::to_string(lineno) + ": quad corners are [x, y]");
        quad.corners[i] = {finite(q[i][0], "x"), finite(q[i][1], "y")};
      }
      rec.quad = quad;
      rec.box.rect = layout::Rect::bounding(quad);
    } else if (j.contains("rect")) {
      const auto& r = j.at("rect");
      if (!r.is_array() || r.size() != 4) throw InputError("line " + std::to_string(lineno) + ": rect is [l, t, r, b]");
      rec.box.rect = {finite(r[0], "left"), finite(r[1], "top"), finite(r[2], "right"), finite(r[3], "bottom")};
    } else {
      throw InputError("line " + std::to_string(lineno) + ": box needs a quad or a rect");
    }
    if (j.contains("word") && !j.at("word").is_null()) rec.box.word = j.at("word").get<std::string>();
    out.push_back(std::move(rec));
  });
  std::vector<layout::TextBox> plain;
  for (const auto& r : out) plain.push_back(r.box);
  layout::validate_boxes(plain);
  return out;
}

std::vector<BoxRecord> read_boxes(const std::filesystem::path& path) { return parse_boxes(read_text(path)); }

std::string format_boxes(const std::vector<BoxRecord>& boxes) {
  std::string out;
  for (const auto& b : boxes) {
    json j;
    j["id"] = b.box.id;
    if (b.quad) {
      json q = json::array();
      for (const auto& p : b.quad->corners) q.push_back({p.x, p.y});
      j["quad"] = q;
    } else {
      j["rect"] = {b.box.rect.left, b.box.rect.top, b.box.rect.right, b.box.rect.bottom};
    }
    if (b.box.word) j["word"] = *b.box.word;
    out += j.dump() + "\n";
  }
  return out;
}

FrameSet parse_frames(const std::string& jsonl) {
  FrameSet set;
  bool have_alphabet = false;
  for_each_line(jsonl, [&](const json& j, size_t lineno) {
    if (j.contains("alphabet")) {
      const auto alphabet = ctc::Alphabet::from_utf8(j.at("alphabet").get<std::string>());
      if (have_alphabet && alphabet.chars() != set.alphabet.chars())
        throw InputError("line " + std::to_string(lineno) + ": conflicting alphabet header");
      set.alphabet = alphabet;
      have_alphabet = true;
      return;
    }
    if (!have_alphabet) throw InputError("frames file must start with an alphabet header");
    const auto id = j.at("box_id").get<layout::BoxId>();
    const auto& rows = j.at("frames");
    const auto classes = static_cast<Eigen::Index>(set.alphabet.num_classes());
    ctc::FrameProbs x{Eigen::MatrixXd(static_cast<Eigen::Index>(rows.size()), classes)};
    for (size_t r = 0; r < rows.size(); ++r) {
      if (rows[r].size() != static_cast<size_t>(classes))
        throw InputError("line " + std::to_string(lineno) + ": frame has " + std::to_string(rows[r].size()) +
                         " entries, expected " + std::to_string(classes));
      for (Eigen::Index c = 0; c < classes; ++c)
        x.probs(static_cast<Eigen::Index>(r), c) = finite(rows[r][static_cast<size_t>(c)], "probability");
    }
    ctc::validate(x, set.alphabet);
    if (!set.frames.emplace(id, std::move(x)).second)
      throw InputError("line " + std::to_string(lineno) + ": duplicate frames for box " + std::to_string(id));
  });
  if (!have_alphabet) throw InputError("frames file has no alphabet header");
  return set;
}

FrameSet read_frames(const std::filesystem::path& path) { return parse_frames(read_text(path)); }

std::string format_frames(const FrameSet& set) {
  std::string out = json{{"alphabet", set.alphabet.utf8()}}.dump() + "\n";
  for (const auto& [id, x] : set.frames) out += json{{"box_id", id}, {"frames", matrix_to_json(x.probs)}}.dump() + "\n";
  return out;
}

std::vector<seq2seq::PhrasePair> parse_corpus(const std::string& jsonl) {
  std::vector<seq2seq::PhrasePair> out;
  for_each_line(jsonl, [&](const json& j, size_t) {
    out.push_back({j.at("noisy").get<std::string>(), j.at("clean").get<std::string>()});
  });
  return out;
}

std::vector<seq2seq::PhrasePair> read_corpus(const std::filesystem::path& path) {
  return parse_corpus(read_text(path));
}

std::string format_corpus(const std::vector<seq2seq::PhrasePair>& corpus) {
  std::string out;
  for (const auto& p : corpus) out += json{{"noisy", p.noisy}, {"clean", p.clean}}.dump() + "\n";
  return out;
}

std::string format_layout(const layout::DocumentLayout& layout) {
  json labels = json::object();
  for (const auto& [id, label] : layout.labels) labels[std::to_string(id)] = label;
  return json{{"labels", labels}, {"order", layout.order}}.dump(2) + "\n";
}

std::map<layout::BoxId, layout::GroupLabel> parse_labels(const std::string& text) {
  try {
    const json j = json::parse(text);
    std::map<layout::BoxId, layout::GroupLabel> out;
    for (const auto& [key, value] : j.at("labels").items()) out[std::stoll(key)] = value.get<layout::GroupLabel>();
    return out;
  } catch (const json::exception& e) {
    throw InputError(std::string("malformed layout: ") + e.what());
  } catch (const std::logic_error& e) {
    throw InputError(std::string("malformed layout id: ") + e.what());
  }
}

std::string format_checkpoint(const seq2seq::CorrectorModel& model) {
  model.validate();
  const auto& h = model.hyper;
  json tensors = json::object();
  for (const auto& t : seq2seq::tensors(const_cast<seq2seq::Parameters&>(model.params)))
    tensors[t.name] = matrix_to_json(t.map());
  json j{{"format", kCheckpointFormat},
         {"version", kCheckpointVersion},
         {"hyper",
          {{"embedding_dim", h.embedding_dim},
           {"hidden_dim", h.hidden_dim},
           {"encoder_layers", h.encoder_layers},
           {"decoder_layers", h.decoder_layers},
           {"dropout", h.dropout}}},
         {"vocab", text::to_utf8(model.vocab.chars())},
         {"tensors", tensors}};
  return j.dump() + "\n";
}

seq2seq::CorrectorModel parse_checkpoint(const std::string& text) {
  json j;
  try {
    j = json::parse(text);
  } catch (const json::parse_error& e) {
    throw MalformedCheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
  try {
    if (j.at("format").get<std::string>() != kCheckpointFormat)
      throw MalformedCheckpointError("not a corrector checkpoint");
    const int version = j.at("version").get<int>();
    if (version != kCheckpointVersion)
      throw VersionMismatchError("checkpoint version " + std::to_string(version) + " is not supported (expected " +
                                 std::to_string(kCheckpointVersion) + ")");
    const auto& jh = j.at("hyper");
    seq2seq::HyperParams h;
    h.embedding_dim = jh.at("embedding_dim").get<int>();
    h.hidden_dim = jh.at("hidden_dim").get<int>();
    h.encoder_layers = jh.at("encoder_layers").get<int>();
    h.decoder_layers = jh.at("decoder_layers").get<int>();
    h.dropout = jh.at("dropout").get<double>();
    const seq2seq::Vocab vocab(text::to_code_points(j.at("vocab").get<std::string>()));
    auto model = seq2seq::CorrectorModel::zeros(h, vocab);
    const auto& jt = j.at("tensors");
    auto views = seq2seq::tensors(model.params);
    if (jt.size() != views.size()) throw MalformedCheckpointError("checkpoint has the wrong number of tensors");
    for (auto& t : views) {
      const auto& rows = jt.at(t.name);
      if (rows.size() != static_cast<size_t>(t.rows)) throw MalformedCheckpointError("tensor " + t.name + " has the wrong shape");
      auto m = t.map();
      for (Eigen::Index r = 0; r < t.rows; ++r) {
        const auto& row = rows[static_cast<size_t>(r)];
        if (row.size() != static_cast<size_t>(t.cols))
          throw MalformedCheckpointError("tensor " + t.name + " has the wrong shape");
        for (Eigen::Index c = 0; c < t.cols; ++c) m(r, c) = row[static_cast<size_t>(c)].get<double>();
      }
    }
    model.validate();
    return model;
  } catch (const json::exception& e) {
    throw MalformedCheckpointError(std::string("malformed checkpoint: ") + e.what());
  } catch (const VersionMismatchError&) {
    throw;
  } catch (const MalformedCheckpointError&) {
    throw;
  } catch (const InputError& e) {
    throw MalformedCheckpointError(std::string("malformed checkpoint: ") + e.what());
  }
}

void save_checkpoint(const seq2seq::CorrectorModel& model, const std::filesystem::path& path) {
  write_text(path, format_checkpoint(model));
}

seq2seq::CorrectorModel load_checkpoint(const std::filesystem::path& path) { return parse_checkpoint(read_text(path)); }

std::string read_text(const std::filesystem::path& path) {
  std::ifstream in(path, std::ios::binary);
  if (!in) throw InputError("cannot open " + path.string());
  std::ostringstream ss;
  ss << in.rdbuf();
  return ss.str();
}

void write_text(const std::filesystem::path& path, const std::string& content) {
  auto tmp = path;
  tmp += ".tmp";
  {
    std::ofstream out(tmp, std::ios::binary | std::ios::trunc);
    if (!out) throw InputError("cannot write " + path.string());
    out << content;
    if (!out) throw InputError("failed writing " + path.string());
  }
  std::filesystem::rename(tmp, path);
}

}  // namespace semstr::io
