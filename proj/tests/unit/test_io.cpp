#include <doctest.h>

#include <filesystem>
#include <random>

#include "semstr/errors.hpp"
#include "semstr/io.hpp"

using namespace semstr;

namespace {

bool same_params(const seq2seq::CorrectorModel& a, const seq2seq::CorrectorModel& b) {
  auto pa = a.params, pb = b.params;
  auto va = seq2seq::tensors(pa), vb = seq2seq::tensors(pb);
  if (va.size() != vb.size()) return false;
  for (size_t k = 0; k < va.size(); ++k)
    if (va[k].name != vb[k].name || va[k].map() != vb[k].map()) return false;
  return a.vocab == b.vocab && a.hyper.hidden_dim == b.hyper.hidden_dim && a.hyper.dropout == b.hyper.dropout;
}

}  // namespace

TEST_CASE("box records") {
  const std::string text =
      "{\"id\": 3, \"rect\": [0, 0, 10, 5], \"word\": \"stop\"}\n"
      "\n"
      "{\"id\": 1, \"quad\": [[0,0],[10,1],[10,6],[0,5]]}\n";
  const auto boxes = io::parse_boxes(text);
  REQUIRE(boxes.size() == 2);
  CHECK(boxes[0].box.word == std::optional<std::string>("stop"));
  CHECK_FALSE(boxes[0].quad);
  CHECK(boxes[1].quad);
  CHECK(boxes[1].box.rect.bottom == 6.0);
  CHECK(io::parse_boxes(io::format_boxes(boxes)).size() == 2);
  CHECK_THROWS_AS(io::parse_boxes("{\"id\": 1}\n"), InputError);
  CHECK_THROWS_AS(io::parse_boxes("{\"id\": 1, \"rect\": [0,0,1,1]}\n{\"id\": 1, \"rect\": [0,0,1,1]}\n"), InputError);
  CHECK_THROWS_AS(io::parse_boxes("{not json\n"), InputError);
}

TEST_CASE("frame records") {
  io::FrameSet set{ctc::Alphabet::from_utf8("ab"), {}};
  set.frames[7] = ctc::FrameProbs{Eigen::MatrixXd(2, 3)};
  set.frames[7].probs << 0.1, 0.2, 0.7, 1.0 / 3, 1.0 / 3, 1.0 / 3;
  const auto back = io::parse_frames(io::format_frames(set));
  CHECK(back.alphabet.chars() == set.alphabet.chars());
  CHECK(back.frames.at(7).probs == set.frames.at(7).probs);
  CHECK_THROWS_AS(io::parse_frames("{\"box_id\": 1, \"frames\": [[1,0,0]]}\n"), InputError);
  CHECK_THROWS_AS(io::parse_frames("{\"alphabet\": \"ab\"}\n{\"box_id\": 1, \"frames\": [[1,0]]}\n"), InputError);
  CHECK_THROWS_AS(io::parse_frames("{\"alphabet\": \"ab\"}\n{\"box_id\": 1, \"frames\": [[0.5,0,0]]}\n"), InputError);
}

TEST_CASE("corpus records") {
  std::vector<seq2seq::PhrasePair> corpus{{"welcone", "welcome"}, {"st0p", "stop"}};
  const auto back = io::parse_corpus(io::format_corpus(corpus));
  REQUIRE(back.size() == 2);
  CHECK(back[0].noisy == "welcone");
  CHECK(back[1].clean == "stop");
}

TEST_CASE("checkpoint round trip is exact") {
  for (std::uint64_t seed = 1; seed <= 10; ++seed) {
    const auto m = seq2seq::CorrectorModel::random(seq2seq::HyperParams{3, 4, 2, 1, 0.3}, seq2seq::Vocab(U"abcé-"),
                                                   seed, 0.7);
    const auto text = io::format_checkpoint(m);
    const auto back = io::parse_checkpoint(text);
    CHECK(same_params(m, back));
    CHECK(io::format_checkpoint(back) == text);
  }
}

TEST_CASE("checkpoint files") {
  const auto m = seq2seq::CorrectorModel::random(seq2seq::HyperParams{2, 3, 1, 1, 0.0}, seq2seq::Vocab(U"xy"), 5);
  const auto dir = std::filesystem::temp_directory_path() / "semstr_io_test";
  std::filesystem::create_directories(dir);
  io::save_checkpoint(m, dir / "a.json");
  const auto loaded = io::load_checkpoint(dir / "a.json");
  io::save_checkpoint(loaded, dir / "b.json");
  CHECK(io::read_text(dir / "a.json") == io::read_text(dir / "b.json"));

  const auto text = io::read_text(dir / "a.json");
  CHECK_THROWS_AS(io::parse_checkpoint(text.substr(0, text.size() / 2)), MalformedCheckpointError);
  std::string wrong_version = text;
  wrong_version.replace(wrong_version.find("\"version\":1"), 11, "\"version\":9");
  CHECK_THROWS_AS(io::parse_checkpoint(wrong_version), VersionMismatchError);
  CHECK_THROWS_AS(io::load_checkpoint(dir / "missing.json"), InputError);
  std::filesystem::remove_all(dir);
}

TEST_CASE("layout json") {
  layout::DocumentLayout lay;
  lay.labels = {{4, 0}, {9, 1}};
  lay.order = {{4}, {9}};
  const auto labels = io::parse_labels(io::format_layout(lay));
  CHECK(labels == lay.labels);
  CHECK_THROWS_AS(io::parse_labels("{}"), InputError);
}
