#include <pybind11/eigen.h>
#include <pybind11/functional.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include "semstr/ctc.hpp"
#include "semstr/errors.hpp"
#include "semstr/geometry.hpp"
#include "semstr/io.hpp"
#include "semstr/layout.hpp"
#include "semstr/pipeline.hpp"
#include "semstr/synth.hpp"
#include "semstr/trainer.hpp"
#include "semstr/vocab.hpp"

namespace py = pybind11;
using namespace semstr;

namespace {

using Matrix = Eigen::Matrix<double, Eigen::Dynamic, Eigen::Dynamic, Eigen::RowMajor>;

geometry::Quad to_quad(const Eigen::Matrix<double, 4, 2, Eigen::RowMajor>& q) {
  geometry::Quad out;
  for (Eigen::Index i = 0; i < 4; ++i) out.corners[static_cast<size_t>(i)] = {q(i, 0), q(i, 1)};
  return out;
}

geometry::GrayImage to_image(const Matrix& m) {
  geometry::GrayImage img(static_cast<size_t>(m.cols()), static_cast<size_t>(m.rows()));
  std::copy(m.data(), m.data() + m.size(), img.pixels.begin());
  return img;
}

Matrix from_image(const geometry::GrayImage& img) {
  return Eigen::Map<const Matrix>(img.pixels.data(), static_cast<Eigen::Index>(img.height),
                                  static_cast<Eigen::Index>(img.width));
}

// (id, left, top, right, bottom)
using BoxTuple = std::tuple<layout::BoxId, double, double, double, double>;

std::vector<layout::TextBox> to_boxes(const std::vector<BoxTuple>& boxes) {
  std::vector<layout::TextBox> out;
  for (const auto& [id, l, t, r, b] : boxes) out.push_back({id, {l, t, r, b}, std::nullopt});
  return out;
}

ctc::FrameProbs frames(const Matrix& m) { return ctc::FrameProbs{m}; }

}  // namespace

PYBIND11_MODULE(_semstr, m) {
  m.doc() = "Scene text reading: rectification, grouping, CTC decoding and phrase correction";

  auto base = py::register_exception<Error>(m, "Error");
  auto input = py::register_exception<InputError>(m, "InputError", base.ptr());
  py::register_exception<DegenerateQuadError>(m, "DegenerateQuadError", input.ptr());
  py::register_exception<MalformedCheckpointError>(m, "MalformedCheckpointError", input.ptr());
  py::register_exception<VersionMismatchError>(m, "VersionMismatchError", input.ptr());
  py::register_exception<DivergenceError>(m, "DivergenceError", base.ptr());

  m.def(
      "compute_homography",
      [](const Eigen::Matrix<double, 4, 2, Eigen::RowMajor>& quad, size_t width, size_t height) {
        return Eigen::Matrix3d(geometry::compute_homography(to_quad(quad), width, height).matrix());
      },
      py::arg("quad"), py::arg("width"), py::arg("height"),
      "3x3 matrix mapping the quad (TL, TR, BR, BL rows) onto [0,width]x[0,height].");
  m.def(
      "rectify",
      [](const Matrix& image, const Eigen::Matrix<double, 4, 2, Eigen::RowMajor>& quad, size_t width, size_t height) {
        return from_image(geometry::rectify(to_image(image), to_quad(quad), width, height));
      },
      py::arg("image"), py::arg("quad"), py::arg("width"), py::arg("height"));

  m.def(
      "group",
      [](const std::vector<BoxTuple>& boxes, double kappa_h, double kappa_v) {
        return layout::group(to_boxes(boxes), layout::GroupingParams{kappa_h, kappa_v});
      },
      py::arg("boxes"), py::arg("kappa_h") = 1.0, py::arg("kappa_v") = 0.7, "Boxes are (id, left, top, right, bottom).");
  m.def(
      "arrange",
      [](const std::vector<BoxTuple>& boxes, double lambda) {
        return layout::arrange(to_boxes(boxes), layout::ArrangeParams{lambda});
      },
      py::arg("boxes"), py::arg("lambda_") = 0.5);
  m.def(
      "analyze",
      [](const std::vector<BoxTuple>& boxes, double kappa_h, double kappa_v, double lambda) {
        const auto lay = layout::analyze(to_boxes(boxes), {{kappa_h, kappa_v}, {lambda}});
        return std::pair{lay.labels, lay.order};
      },
      py::arg("boxes"), py::arg("kappa_h") = 1.0, py::arg("kappa_v") = 0.7, py::arg("lambda_") = 0.5,
      "Returns (labels, order).");

  m.def(
      "ctc_log_prob", [](const Matrix& probs, const ctc::LabelSeq& label) { return ctc::log_prob(frames(probs), label); },
      py::arg("probs"), py::arg("label"), "Blank is the last column.");
  m.def(
      "ctc_collapse", [](const std::vector<size_t>& path, size_t blank) { return ctc::collapse(path, blank); },
      py::arg("path"), py::arg("blank"));
  m.def(
      "greedy_decode", [](const Matrix& probs) { return ctc::greedy_decode(frames(probs)); }, py::arg("probs"));
  m.def(
      "beam_decode", [](const Matrix& probs, size_t width) { return ctc::beam_decode(frames(probs), width); },
      py::arg("probs"), py::arg("beam_width") = 8);

  m.def(
      "preprocess",
      [](const std::string& phrase, const std::vector<std::string>& corpus) {
        const auto v = seq2seq::Vocab::from_corpus(corpus);
        return seq2seq::format_tokens(seq2seq::preprocess(phrase, v), v);
      },
      py::arg("phrase"), py::arg("corpus"), "Space-separated tokens under the vocabulary of corpus.");

  py::class_<seq2seq::CorrectorModel>(m, "CorrectorModel")
      .def_static(
          "random",
          [](const std::vector<std::string>& corpus, int embedding, int hidden, int enc_layers, int dec_layers,
             double dropout, std::uint64_t seed) {
            return seq2seq::CorrectorModel::random({embedding, hidden, enc_layers, dec_layers, dropout},
                                                   seq2seq::Vocab::from_corpus(corpus), seed);
          },
          py::arg("corpus"), py::arg("embedding") = 32, py::arg("hidden") = 64, py::arg("encoder_layers") = 2,
          py::arg("decoder_layers") = 2, py::arg("dropout") = 0.3, py::arg("seed") = 1)
      .def_static("load", &io::load_checkpoint, py::arg("path"))
      .def_static("from_json", &io::parse_checkpoint, py::arg("text"))
      .def("save", [](const seq2seq::CorrectorModel& self, const std::filesystem::path& p) { io::save_checkpoint(self, p); })
      .def("to_json", [](const seq2seq::CorrectorModel& self) { return io::format_checkpoint(self); })
      .def_property_readonly("parameter_count",
                             [](const seq2seq::CorrectorModel& self) { return seq2seq::parameter_count(self.params); })
      .def(
          "correct",
          [](const seq2seq::CorrectorModel& self, const std::string& phrase, size_t beam) {
            const auto c = seq2seq::correct(self, phrase, beam);
            return std::tuple{c.text, c.cap_hit, c.degraded};
          },
          py::arg("phrase"), py::arg("beam_width") = 1, "Returns (text, cap_hit, degraded).")
      .def(
          "loss",
          [](const seq2seq::CorrectorModel& self, const std::vector<std::pair<std::string, std::string>>& pairs) {
            std::vector<seq2seq::PhrasePair> corpus;
            for (const auto& [n, c] : pairs) corpus.push_back({n, c});
            return seq2seq::mean_loss(self, seq2seq::make_examples(corpus, self.vocab));
          },
          py::arg("pairs"));

  m.def(
      "train",
      [](const seq2seq::CorrectorModel& model, const std::vector<std::pair<std::string, std::string>>& pairs,
         std::int64_t steps, double lr, std::int64_t decay_start, std::int64_t halve_every, std::int64_t batch,
         double clip, std::uint64_t seed) {
        std::vector<seq2seq::PhrasePair> corpus;
        for (const auto& [n, c] : pairs) corpus.push_back({n, c});
        seq2seq::TrainConfig cfg{lr, decay_start, halve_every, batch, clip, steps, seed};
        py::gil_scoped_release release;
        auto r = seq2seq::train(model, corpus, cfg);
        return std::pair{std::move(r.model), std::move(r.losses)};
      },
      py::arg("model"), py::arg("pairs"), py::arg("steps"), py::arg("lr") = 1.0, py::arg("decay_start") = 5000,
      py::arg("halve_every") = 1000, py::arg("batch_size") = 64, py::arg("clip") = 5.0, py::arg("seed") = 1,
      "Returns (trained model, per-step losses).");

  m.def(
      "noisy_corpus",
      [](std::size_t count, double p_sub, double p_del, double p_ins, std::uint64_t seed) {
        synth::SynthSpec spec;
        spec.seed = seed;
        spec.p_sub = p_sub;
        spec.p_del = p_del;
        spec.p_ins = p_ins;
        return synth::make_noisy_corpus(spec, count);
      },
      py::arg("count"), py::arg("p_sub") = 0.05, py::arg("p_del") = 0.02, py::arg("p_ins") = 0.01,
      py::arg("seed") = 1, "List of (noisy, clean) phrase pairs.");
  m.def(
      "synth_document",
      [](std::uint64_t seed, bool phrases) {
        synth::SynthSpec spec;
        spec.seed = seed;
        spec.block_text = phrases ? synth::BlockText::kPhrases : synth::BlockText::kRandomWords;
        const auto doc = synth::gen_document(spec);
        py::list boxes;
        for (const auto& b : doc.boxes)
          boxes.append(py::make_tuple(b.id, b.rect.left, b.rect.top, b.rect.right, b.rect.bottom, *b.word));
        py::dict out;
        out["width"] = doc.width;
        out["height"] = doc.height;
        out["boxes"] = boxes;
        out["reading"] = doc.reading;
        out["block_text"] = doc.block_text;
        return out;
      },
      py::arg("seed") = 1, py::arg("phrases") = false,
      "Dict with page size, boxes (id, left, top, right, bottom, word), reading order per block and block text.");
  m.def(
      "render_frames",
      [](const std::string& word, double temperature, std::uint64_t seed) {
        synth::SynthSpec spec;
        spec.temperature = temperature;
        std::mt19937_64 rng(seed);
        return Matrix(synth::render_frame_probs(word, synth::default_alphabet(), spec, rng).probs);
      },
      py::arg("word"), py::arg("temperature") = 0.0, py::arg("seed") = 1,
      "Frame probabilities over the default alphabet; blank is the last column.");
  m.def("default_alphabet", [] { return synth::default_alphabet().utf8(); });

  m.def(
      "run_pipeline",
      [](const std::string& boxes_jsonl, const std::string& frames_jsonl, const seq2seq::CorrectorModel* model,
         const std::string& params_json) {
        pipeline::PipelineInput in;
        in.boxes = io::parse_boxes(boxes_jsonl);
        in.frames = io::parse_frames(frames_jsonl);
        return pipeline::format_report_json(pipeline::run(in, model, pipeline::parse_params(params_json)).report);
      },
      py::arg("boxes_jsonl"), py::arg("frames_jsonl"), py::arg("model") = nullptr, py::arg("params_json") = "{}",
      "Runs decoding, layout and correction on JSONL inputs; returns the report as JSON text.");
  m.def("format_percent", &pipeline::format_percent, py::arg("fraction"));
}
