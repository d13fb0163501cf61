// semstr command-line front end.
#include <cstdio>
#include <filesystem>
#include <iostream>
#include <random>
#include <string>

#include <CLI11.hpp>
#include <json.hpp>

#include "semstr/ctc.hpp"
#include "semstr/errors.hpp"
#include "semstr/geometry.hpp"
#include "semstr/io.hpp"
#include "semstr/layout.hpp"
#include "semstr/pipeline.hpp"
#include "semstr/synth.hpp"
#include "semstr/text.hpp"
#include "semstr/trainer.hpp"

namespace fs = std::filesystem;
using namespace semstr;

namespace {

constexpr int kExitInput = 2;
constexpr int kExitDivergence = 3;

void emit(const std::string& out, const std::string& content) {
  if (out.empty() || out == "-")
    std::cout << content;
  else
    io::write_text(out, content);
}

pipeline::PipelineParams load_params(const std::string& path) {
  return path.empty() ? pipeline::PipelineParams{} : pipeline::parse_params(io::read_text(path));
}

std::vector<layout::TextBox> plain_boxes(const std::vector<io::BoxRecord>& recs) {
  std::vector<layout::TextBox> out;
  for (const auto& r : recs) out.push_back(r.box);
  return out;
}

void dump_overlay(const layout::DocumentLayout& lay, const std::string& path) {
  double w = 1.0, h = 1.0;
  for (const auto& b : lay.boxes) {
    w = std::max(w, b.rect.right + 1.0);
    h = std::max(h, b.rect.bottom + 1.0);
  }
  geometry::write_pgm(layout::render_overlay(lay, static_cast<size_t>(std::ceil(w)), static_cast<size_t>(std::ceil(h))),
                      path);
}

struct Common {
  std::uint64_t seed = 1;
  std::string params;
  std::string out;
};

void add_common(CLI::App* cmd, Common& c) {
  cmd->add_option("--seed", c.seed, "Random seed");
  cmd->add_option("--params", c.params, "Pipeline parameter file (JSON)");
  cmd->add_option("--out", c.out, "Output path ('-' or empty for stdout)");
}

}  // namespace

int main(int argc, char** argv) {
  CLI::App app{"Scene text reading with grouping, arranging and semantic correction"};
  app.require_subcommand(1);

  // synth-gen
  Common sg;
  std::string sg_mode = "words";
  double sg_temp = 0.0, sg_psub = 0.0, sg_pdel = 0.0, sg_pins = 0.0;
  std::size_t sg_corpus = 0;
  std::string sg_confusions;
  auto* synth_cmd = app.add_subcommand("synth-gen", "Generate a synthetic document (boxes, frames, page) and corpus");
  add_common(synth_cmd, sg);
  synth_cmd->add_option("--mode", sg_mode, "Block text: words or phrases")->check(CLI::IsMember({"words", "phrases"}));
  synth_cmd->add_option("--temperature", sg_temp, "Frame confusion temperature");
  synth_cmd->add_option("--p-sub", sg_psub, "Corpus substitution rate");
  synth_cmd->add_option("--p-del", sg_pdel, "Corpus deletion rate");
  synth_cmd->add_option("--p-ins", sg_pins, "Corpus insertion rate");
  synth_cmd->add_option("--corpus", sg_corpus, "Number of noisy corpus pairs to write");
  synth_cmd->add_option("--confusions", sg_confusions, "Confusion table file");

  // rectify
  Common rc;
  std::string rc_image, rc_boxes;
  std::size_t rc_height = 32;
  auto* rectify_cmd = app.add_subcommand("rectify", "Rectify each box of a PGM image into an axis-aligned crop");
  add_common(rectify_cmd, rc);
  rectify_cmd->add_option("--image", rc_image, "Input PGM")->required();
  rectify_cmd->add_option("--boxes", rc_boxes, "Box JSONL")->required();
  rectify_cmd->add_option("--height", rc_height, "Crop height in pixels");

  // group
  Common gc;
  std::string gc_boxes, gc_overlay;
  auto* group_cmd = app.add_subcommand("group", "Group boxes into blocks and arrange each block");
  add_common(group_cmd, gc);
  group_cmd->add_option("--boxes", gc_boxes, "Box JSONL")->required();
  group_cmd->add_option("--dump-overlay", gc_overlay, "Write a PGM with group-shaded boxes");

  // arrange
  Common ac;
  std::string ac_boxes, ac_layout;
  auto* arrange_cmd = app.add_subcommand("arrange", "Arrange boxes in reading order within given groups");
  add_common(arrange_cmd, ac);
  arrange_cmd->add_option("--boxes", ac_boxes, "Box JSONL")->required();
  arrange_cmd->add_option("--layout", ac_layout, "Layout JSON with labels (default: one group)");

  // decode
  Common dc;
  std::string dc_frames;
  std::size_t dc_beam = 8;
  auto* decode_cmd = app.add_subcommand("decode", "CTC-decode frame probabilities into words");
  add_common(decode_cmd, dc);
  decode_cmd->add_option("--frames", dc_frames, "Frames JSONL")->required();
  decode_cmd->add_option("--beam", dc_beam, "Beam width (1 = greedy)")->check(CLI::PositiveNumber);

  // train-corrector
  Common tc;
  std::string tc_corpus, tc_losses;
  seq2seq::TrainConfig tc_cfg;
  seq2seq::HyperParams tc_hyper;
  auto* train_cmd = app.add_subcommand("train-corrector", "Train the spelling corrector on a noisy/clean corpus");
  add_common(train_cmd, tc);
  train_cmd->add_option("--corpus", tc_corpus, "Corpus JSONL {noisy, clean}")->required();
  train_cmd->add_option("--steps", tc_cfg.max_steps, "SGD steps");
  train_cmd->add_option("--lr", tc_cfg.lr0, "Initial learning rate");
  train_cmd->add_option("--decay-start", tc_cfg.decay_start, "Step at which halving starts");
  train_cmd->add_option("--halve-every", tc_cfg.halve_every, "Steps between halvings");
  train_cmd->add_option("--batch", tc_cfg.batch_size, "Batch size");
  train_cmd->add_option("--clip", tc_cfg.clip_norm, "Global gradient-norm clip");
  train_cmd->add_option("--embedding", tc_hyper.embedding_dim, "Embedding size");
  train_cmd->add_option("--hidden", tc_hyper.hidden_dim, "LSTM hidden size");
  train_cmd->add_option("--encoder-layers", tc_hyper.encoder_layers, "Encoder layers");
  train_cmd->add_option("--decoder-layers", tc_hyper.decoder_layers, "Decoder layers");
  train_cmd->add_option("--dropout", tc_hyper.dropout, "Dropout between stacked layers");
  train_cmd->add_option("--loss-log", tc_losses, "Write the per-step loss curve here");

  // correct
  Common cc;
  std::string cc_model, cc_text;
  std::size_t cc_beam = 1;
  auto* correct_cmd = app.add_subcommand("correct", "Correct phrases (argument or one per stdin line)");
  add_common(correct_cmd, cc);
  correct_cmd->add_option("--model", cc_model, "Corrector checkpoint")->required();
  correct_cmd->add_option("--text", cc_text, "Phrase to correct");
  correct_cmd->add_option("--beam", cc_beam, "Beam width (1 = greedy)")->check(CLI::PositiveNumber);

  // run
  Common rn;
  std::string rn_boxes, rn_frames, rn_image, rn_model, rn_overlay, rn_crops;
  bool rn_text = false;
  auto* run_cmd = app.add_subcommand("run", "Full pipeline: rectify, decode, group, arrange, correct, evaluate");
  add_common(run_cmd, rn);
  run_cmd->add_option("--boxes", rn_boxes, "Box JSONL")->required();
  run_cmd->add_option("--frames", rn_frames, "Frames JSONL")->required();
  run_cmd->add_option("--image", rn_image, "Optional PGM; enables rectification");
  run_cmd->add_option("--model", rn_model, "Corrector checkpoint (omit to skip correction)");
  run_cmd->add_option("--dump-overlay", rn_overlay, "Write a PGM with group-shaded boxes");
  run_cmd->add_option("--crops", rn_crops, "Directory for rectified crops");
  run_cmd->add_flag("--text", rn_text, "Human-readable report instead of JSON");

  // eval
  Common ec;
  std::string ec_pred, ec_truth;
  auto* eval_cmd = app.add_subcommand("eval", "Word accuracy of decoded words against ground truth");
  add_common(eval_cmd, ec);
  eval_cmd->add_option("--pred", ec_pred, "Decoded JSONL {box_id, text}")->required();
  eval_cmd->add_option("--truth", ec_truth, "Box JSONL with words")->required();

  try {
    app.parse(argc, argv);
  } catch (const CLI::ParseError& e) {
    const int code = app.exit(e);
    return code == 0 ? 0 : kExitInput;
  }

  try {
    if (synth_cmd->parsed()) {
      synth::SynthSpec spec;
      spec.seed = sg.seed;
      spec.block_text = sg_mode == "phrases" ? synth::BlockText::kPhrases : synth::BlockText::kRandomWords;
      spec.temperature = sg_temp;
      spec.p_sub = sg_psub;
      spec.p_del = sg_pdel;
      spec.p_ins = sg_pins;
      if (!sg_confusions.empty()) spec.confusions = synth::ConfusionTable::load(sg_confusions);
      const fs::path dir = sg.out.empty() ? fs::path(".") : fs::path(sg.out);
      fs::create_directories(dir);
      const auto doc = synth::gen_document(spec);
      std::vector<io::BoxRecord> recs;
      for (const auto& b : doc.boxes) recs.push_back({b, std::nullopt});
      io::write_text(dir / "boxes.jsonl", io::format_boxes(recs));
      io::FrameSet frames{synth::default_alphabet(), {}};
      std::mt19937_64 rng(spec.seed ^ 0x5deece66dULL);
      for (const auto& b : doc.boxes) frames.frames[b.id] = synth::render_frame_probs(*b.word, frames.alphabet, spec, rng);
      io::write_text(dir / "frames.jsonl", io::format_frames(frames));
      geometry::write_pgm(synth::render_page(doc), dir / "page.pgm");
      nlohmann::json truth{{"reading", doc.reading}, {"blocks", doc.block_text}};
      io::write_text(dir / "truth.json", truth.dump(2) + "\n");
      if (sg_corpus > 0) {
        std::vector<seq2seq::PhrasePair> corpus;
        for (auto& [noisy, clean] : synth::make_noisy_corpus(spec, sg_corpus)) corpus.push_back({noisy, clean});
        io::write_text(dir / "corpus.jsonl", io::format_corpus(corpus));
      }
      std::cerr << "wrote " << doc.boxes.size() << " boxes in " << doc.reading.size() << " blocks to " << dir << "\n";
    } else if (rectify_cmd->parsed()) {
      const auto img = geometry::read_pgm(rc_image);
      const auto recs = io::read_boxes(rc_boxes);
      pipeline::PipelineInput input{recs, {}, img};
      auto params = load_params(rc.params);
      params.crop_height = rc_height;
      const auto out = pipeline::run(input, nullptr, params);
      const fs::path dir = rc.out.empty() ? fs::path(".") : fs::path(rc.out);
      fs::create_directories(dir);
      for (const auto& [id, crop] : out.crops) geometry::write_pgm(crop, dir / ("box_" + std::to_string(id) + ".pgm"));
      std::cerr << "rectified " << out.crops.size() << " boxes into " << dir << "\n";
    } else if (group_cmd->parsed()) {
      const auto params = load_params(gc.params);
      const auto lay = layout::analyze(plain_boxes(io::read_boxes(gc_boxes)), params.layout);
      emit(gc.out, io::format_layout(lay));
      if (!gc_overlay.empty()) dump_overlay(lay, gc_overlay);
    } else if (arrange_cmd->parsed()) {
      const auto params = load_params(ac.params);
      const auto boxes = plain_boxes(io::read_boxes(ac_boxes));
      std::map<layout::BoxId, layout::GroupLabel> labels;
      if (!ac_layout.empty()) labels = io::parse_labels(io::read_text(ac_layout));
      std::map<layout::GroupLabel, std::vector<layout::TextBox>> groups;
      for (const auto& b : boxes) {
        auto it = labels.find(b.id);
        if (!ac_layout.empty() && it == labels.end()) throw InputError("box " + std::to_string(b.id) + " has no label");
        groups[ac_layout.empty() ? 0 : it->second].push_back(b);
      }
      nlohmann::json order = nlohmann::json::object();
      for (const auto& [label, members] : groups)
        order[std::to_string(label)] = layout::arrange(members, params.layout.arrange);
      emit(ac.out, nlohmann::json{{"order", order}}.dump(2) + "\n");
    } else if (decode_cmd->parsed()) {
      const auto frames = io::read_frames(dc_frames);
      std::string out;
      for (const auto& [id, x] : frames.frames) {
        const auto label = dc_beam == 1 ? ctc::greedy_decode(x) : ctc::beam_decode(x, dc_beam);
        out += nlohmann::json{{"box_id", id}, {"text", ctc::decode_label(label, frames.alphabet)}}.dump() + "\n";
      }
      emit(dc.out, out);
    } else if (train_cmd->parsed()) {
      if (tc.out.empty()) throw InputError("train-corrector needs --out");
      tc_cfg.seed = tc.seed;
      const auto corpus = io::read_corpus(tc_corpus);
      std::vector<std::string> phrases;
      for (const auto& p : corpus) {
        phrases.push_back(p.noisy);
        phrases.push_back(p.clean);
      }
      const auto vocab = seq2seq::Vocab::from_corpus(phrases);
      auto model = seq2seq::CorrectorModel::random(tc_hyper, vocab, tc.seed);
      const auto result = seq2seq::train(std::move(model), corpus, tc_cfg, [&](std::int64_t step, double loss, double lr) {
        if ((step + 1) % 100 == 0) std::cerr << "step " << step + 1 << " loss " << loss << " lr " << lr << "\n";
      });
      io::save_checkpoint(result.model, tc.out);
      if (!tc_losses.empty()) {
        std::string curve;
        for (double l : result.losses) curve += nlohmann::json(l).dump() + "\n";
        io::write_text(tc_losses, curve);
      }
    } else if (correct_cmd->parsed()) {
      const auto model = io::load_checkpoint(cc_model);
      std::string out;
      auto one = [&](const std::string& phrase) {
        const auto c = seq2seq::correct(model, phrase, cc_beam);
        out += c.text;
        if (c.cap_hit) out += "\t[length cap]";
        if (c.degraded) out += "\t[degraded]";
        out += "\n";
      };
      if (!cc_text.empty()) {
        one(cc_text);
      } else {
        std::string line;
        while (std::getline(std::cin, line))
          if (!text::trim(line).empty()) one(line);
      }
      emit(cc.out, out);
    } else if (run_cmd->parsed()) {
      const auto params = load_params(rn.params);
      pipeline::PipelineInput input{io::read_boxes(rn_boxes), io::read_frames(rn_frames), std::nullopt};
      if (!rn_image.empty()) input.image = geometry::read_pgm(rn_image);
      std::optional<seq2seq::CorrectorModel> model;
      if (!rn_model.empty()) model = io::load_checkpoint(rn_model);
      const auto out = pipeline::run(input, model ? &*model : nullptr, params);
      std::cerr << (out.report.rectified ? "rectification: ran on the supplied image\n"
                                         : "rectification: skipped, frames taken as given\n");
      emit(rn.out, rn_text ? pipeline::format_report_text(out.report) : pipeline::format_report_json(out.report));
      if (!rn_overlay.empty()) dump_overlay(out.layout, rn_overlay);
      if (!rn_crops.empty()) {
        fs::create_directories(rn_crops);
        for (const auto& [id, crop] : out.crops)
          geometry::write_pgm(crop, fs::path(rn_crops) / ("box_" + std::to_string(id) + ".pgm"));
      }
    } else if (eval_cmd->parsed()) {
      std::map<layout::BoxId, std::string> pred, truth;
      std::istringstream in(io::read_text(ec_pred));
      std::string line;
      while (std::getline(in, line)) {
        if (text::trim(line).empty()) continue;
        try {
          const auto j = nlohmann::json::parse(line);
          pred[j.at("box_id").get<layout::BoxId>()] = j.at("text").get<std::string>();
        } catch (const nlohmann::json::exception& e) {
          throw InputError(std::string("malformed prediction line: ") + e.what());
        }
      }
      for (const auto& r : io::read_boxes(ec_truth))
        if (r.box.word) truth[r.box.id] = *r.box.word;
      const auto acc = pipeline::evaluate(pred, truth);
      nlohmann::json j{{"correct", acc.overall.correct},
                       {"total", acc.overall.total},
                       {"accuracy", acc.overall.value()},
                       {"percent", pipeline::format_percent(acc.overall.value())}};
      emit(ec.out, j.dump(2) + "\n");
    }
  } catch (const DivergenceError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitDivergence;
  } catch (const InputError& e) {
    std::cerr << "error: " << e.what() << "\n";
    return kExitInput;
  } catch (const std::exception& e) {
    std::cerr << "error: " << e.what() << "\n";
    return 1;
  }
  return 0;
}
