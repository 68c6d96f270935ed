#include "mmh/cli.hpp"

#include <algorithm>
#include <cstdio>
#include <filesystem>
#include <optional>

#include "CLI11.hpp"
#include "mmh/error.hpp"
#include "mmh/pipeline.hpp"

namespace mmh {

namespace fs = std::filesystem;

namespace {

int exit_code_for(ErrorCode code) {
  switch (code) {
    case ErrorCode::IoFailure:
    case ErrorCode::BadMagic:
    case ErrorCode::TruncatedFile:
    case ErrorCode::NonFiniteValue:
    case ErrorCode::EmptyClip:
    case ErrorCode::HeterogeneousBatch:
    case ErrorCode::ShapeMismatch:
    case ErrorCode::SequenceTooLong:
    case ErrorCode::DegenerateBatch:
    case ErrorCode::NonFiniteLoss:
    case ErrorCode::LengthMismatch:
    case ErrorCode::EmptyInput:
    case ErrorCode::NonFinite:
      return 2;
    default:
      return 1;
  }
}

// Leftover "--key value" or "--key=value" pairs become configuration overrides.
std::vector<Override> parse_overrides(const std::vector<std::string>& extras) {
  std::vector<Override> out;
  for (size_t i = 0; i < extras.size(); ++i) {
    const std::string& a = extras[i];
    if (a.size() < 3 || a.rfind("--", 0) != 0) {
      throw CLI::ExtrasError("unexpected argument '" + a + "'", CLI::ExitCodes::ExtrasError);
    }
    const std::string body = a.substr(2);
    const auto eq = body.find('=');
    if (eq != std::string::npos) {
      out.emplace_back(body.substr(0, eq), body.substr(eq + 1));
      continue;
    }
    if (i + 1 >= extras.size()) {
      throw CLI::ExtrasError("override '" + a + "' has no value", CLI::ExitCodes::ExtrasError);
    }
    out.emplace_back(body, extras[++i]);
  }
  return out;
}

// The artifacts directory is --output_path when given; otherwise --config_path
// names either the directory itself, a config.yaml inside it, or a run
// configuration whose training.output_dir points at it.
fs::path resolve_artifacts(const std::string& output_path, const std::string& config_path) {
  if (!output_path.empty()) return output_path;
  if (config_path.empty()) {
    throw Error(ErrorCode::ValidationFailed, "one of --output_path or --config_path is required");
  }
  const fs::path p(config_path);
  if (fs::is_directory(p)) return p;
  if (fs::exists(p.parent_path() / artifacts::kSetup)) return p.parent_path();
  return load_config(p).training.output_dir;
}

std::string join(const std::vector<std::string>& v) {
  std::string s;
  for (const auto& x : v) s += (s.empty() ? "" : ", ") + x;
  return s;
}

}  // namespace

int run_cli(const std::vector<std::string>& args, std::ostream& out, std::ostream& err) {
  CLI::App app{"Multimodal sequence-to-sequence toolkit", "mmh"};
  app.require_subcommand(1);

  std::string modality, config_path, output_path, task, resume, metric = "bleu", checkpoint, split = "test",
                                                                 predictions;

  auto* setup_cmd = app.add_subcommand("setup", "Validate data, build the vocabulary and initialize the model");
  setup_cmd->add_option("--modality", modality, "One of: " + join(registered_modalities()))->required();
  setup_cmd->add_option("--config_path", config_path, "Run configuration (YAML)")->required();
  setup_cmd->allow_extras();
  setup_cmd->footer("Extra --section.key VALUE pairs override the configuration.");

  auto* train_cmd = app.add_subcommand("train", "Train from a setup artifacts directory");
  train_cmd->add_option("--task", task, "seq2seq or mixed-seq2seq")->required();
  train_cmd->add_option("--output_path", output_path, "Artifacts directory written by setup");
  train_cmd->add_option("--config_path", config_path, "Artifacts config.yaml, or the run configuration");
  train_cmd->add_option("--resume_from_checkpoint", resume, "Continue from this checkpoint");
  train_cmd->allow_extras();
  train_cmd->footer("Extra --section.key VALUE pairs (or --key VALUE for training keys) override the configuration.");

  auto* gen_cmd = app.add_subcommand("generate", "Decode a split and score it");
  gen_cmd->add_option("--task", task, "seq2seq or mixed-seq2seq")->required();
  gen_cmd->add_option("--metric_name", metric, "bleu, chrf or perplexity")->capture_default_str();
  gen_cmd->add_option("--config_path", config_path, "Artifacts config.yaml, or the run configuration");
  gen_cmd->add_option("--output_path", output_path, "Artifacts directory written by setup");
  gen_cmd->add_option("--checkpoint", checkpoint, "Checkpoint to load (default: best.ckpt)");
  gen_cmd->add_option("--split", split, "test, validation or train")->capture_default_str();
  gen_cmd->add_option("--predictions_path", predictions, "Where to write the prediction dump");
  gen_cmd->allow_extras();

  CLI::App* active = nullptr;
  try {
    std::vector<std::string> reversed(args.rbegin(), args.rend());
    app.parse(reversed);
    for (auto* c : {setup_cmd, train_cmd, gen_cmd}) {
      if (c->parsed()) active = c;
    }
    const auto overrides = parse_overrides(active->remaining());

    if (active == setup_cmd) {
      const Modality m = parse_modality(modality);
      const RunConfig cfg = load_config(config_path, overrides);
      out << setup(m, cfg, &err).string() << "\n";
    } else if (active == train_cmd) {
      TrainOptions o;
      o.task = task;
      o.overrides = overrides;
      if (!resume.empty()) o.resume_from = resume;
      o.progress = &err;
      const TrainResult r = train(resolve_artifacts(output_path, config_path), o);
      out << r.final_checkpoint.string() << "\n";
    } else {
      GenerateOptions o;
      o.task = task;
      o.metric_name = metric;
      o.split = split;
      o.overrides = overrides;
      if (!checkpoint.empty()) o.checkpoint = checkpoint;
      if (!predictions.empty()) o.predictions_path = predictions;
      const GenerateResult r = generate(resolve_artifacts(output_path, config_path), o);
      char line[64];
      std::snprintf(line, sizeof line, "%.2f", r.eval.score);
      out << r.eval.metric_name << ": " << line << "\n";
      err << "predictions written to " << r.predictions_path.string() << "\n";
    }
    return 0;
  } catch (const CLI::CallForHelp&) {
    for (auto* c : {setup_cmd, train_cmd, gen_cmd}) {
      if (c->parsed()) active = c;
    }
    out << (active ? active->help() : app.help());
    return 0;
  } catch (const CLI::CallForAllHelp&) {
    out << app.help("", CLI::AppFormatMode::All);
    return 0;
  } catch (const CLI::ParseError& e) {
    for (auto* c : {setup_cmd, train_cmd, gen_cmd}) {
      if (c->parsed()) active = c;
    }
    err << "error: " << e.what() << "\n\n" << (active ? active->help() : app.help());
    return 1;
  } catch (const Error& e) {
    err << "error: " << e.what() << "\n";
    return exit_code_for(e.code());
  } catch (const std::exception& e) {
    err << "error: " << e.what() << "\n";
    return 2;
  }
}

}  // namespace mmh
