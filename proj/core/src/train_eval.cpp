#include "hns/train_eval.hpp"

#include <algorithm>
#include <cmath>
#include <fstream>
#include <iomanip>
#include <iostream>
#include <sstream>

#include <torch/torch.h>

#include "hns/checkpoint.hpp"
#include "hns/errors.hpp"

namespace hns {

namespace fs = std::filesystem;
namespace F = torch::nn::functional;
using json = nlohmann::json;

void enable_deterministic_backend() {
  at::globalContext().setDeterministicAlgorithms(true, /*warn_only=*/false);
  at::globalContext().setBenchmarkCuDNN(false);
}

// ---------------------------------------------------------------------------
// Training
// ---------------------------------------------------------------------------

LossValues train_step(HnsNet& model, torch::optim::Optimizer& optimizer, const Batch& batch, double lambda) {
  model->train();
  optimizer.zero_grad();
  auto bundle = model->forward(batch.images);
  auto report = total_loss(bundle, batch, lambda);
  auto values = report.values();
  if (!std::isfinite(values.total)) throw DivergenceError("non-finite training loss");
  report.total.backward();
  optimizer.step();
  return values;
}

std::string loss_log_header(const std::vector<int>& strides) {
  std::ostringstream s;
  s << "step,l_road";
  for (int st : strides) s << ",l_border_s" << st;
  for (int st : strides) s << ",l_cons_s" << st;
  s << ",total";
  return s.str();
}

std::string loss_log_row(const StepRecord& r) {
  std::ostringstream s;
  s << std::setprecision(17) << r.step << "," << r.losses.road;
  for (double b : r.losses.border) s << "," << b;
  for (double c : r.losses.consistency) s << "," << c;
  s << "," << r.losses.total;
  return s.str();
}

namespace {

Batch load_batch(const Dataset& data, const std::vector<int64_t>& indices, int64_t epoch,
                 const std::vector<int>& strides) {
  std::vector<RoadSample> samples;
  samples.reserve(indices.size());
  for (auto i : indices) samples.push_back(data.sample_crop(i, epoch, strides));
  return collate(samples);
}

std::string epoch_dir_name(int64_t epoch) {
  std::ostringstream s;
  s << "epoch_" << std::setw(4) << std::setfill('0') << epoch;
  return s.str();
}

void copy_dir(const fs::path& from, const fs::path& to) {
  std::error_code ec;
  fs::remove_all(to, ec);
  fs::copy(from, to, fs::copy_options::recursive, ec);
  if (ec) throw IoError("cannot copy checkpoint to " + to.string() + ": " + ec.message());
}

}  // namespace

TrainResult train(const RunConfig& config, const Dataset& train_set, const Dataset* val_set,
                  const TrainOptions& options) {
  config.validate();
  if (train_set.size() == 0) throw ValidationError("training split is empty");
  enable_deterministic_backend();

  const fs::path root = options.checkpoint_root.empty() ? fs::path(config.train.checkpoint_dir)
                                                        : options.checkpoint_root;
  std::error_code ec;
  fs::create_directories(root, ec);
  if (ec) throw IoError("cannot create checkpoint directory " + root.string());

  std::optional<Manifest> resumed;
  if (options.resume_from) {
    resumed = read_manifest(*options.resume_from);
    if (!(resumed->config.model == config.model) || !(resumed->config.data == config.data) ||
        resumed->config.train.seed != config.train.seed) {
      throw ValidationError("checkpoint/config mismatch: cannot resume " + options.resume_from->string() +
                            " under a different model, data or seed configuration");
    }
  }
  auto model = resumed ? load_model(*options.resume_from, &config) : build_model(config.model, config.train.seed);
  torch::optim::Adam optimizer(model->parameters(),
                               torch::optim::AdamOptions(config.train.learning_rate)
                                   .betas({config.train.beta1, config.train.beta2})
                                   .weight_decay(config.train.weight_decay));
  const auto strides = config.model.border_strides();

  TrainResult result;
  int64_t start_epoch = 0;
  double best_f1 = -1.0;
  if (resumed) {
    load_optimizer(*options.resume_from, optimizer);
    start_epoch = resumed->epoch;
    result.steps = resumed->step;
    result.last_checkpoint = *options.resume_from;
    if (fs::exists(root / "best" / "manifest.json")) {
      const auto best = read_manifest(root / "best");
      best_f1 = best.metrics.value("f1", -1.0);
      result.best_checkpoint = root / "best";
    }
  }

  auto make_manifest = [&](int64_t epoch, json metrics) {
    Manifest m;
    m.config = config;
    m.step = result.steps;
    m.epoch = epoch;
    m.seed = config.train.seed;
    m.metrics = std::move(metrics);
    return m;
  };

  if (!options.resume_from) {
    result.last_checkpoint = root / epoch_dir_name(0);
    save_checkpoint(result.last_checkpoint, model, &optimizer, make_manifest(0, json::object()));
  }

  std::ofstream log;
  if (!options.log_csv.empty()) {
    const bool fresh = !fs::exists(options.log_csv) || !options.resume_from;
    if (options.log_csv.has_parent_path()) fs::create_directories(options.log_csv.parent_path());
    log.open(options.log_csv, fresh ? std::ios::trunc : std::ios::app);
    if (!log) throw IoError("cannot write training log " + options.log_csv.string());
    if (fresh) log << loss_log_header(strides) << "\n";
  }

  const double lambda = config.model.consistency_weight;
  const int64_t batch_size = config.train.batch_size;
  bool stop = false;
  for (int64_t epoch = start_epoch; epoch < config.train.epochs && !stop; ++epoch) {
    const auto order = train_set.epoch_order(epoch);
    for (size_t begin = 0; begin < order.size(); begin += static_cast<size_t>(batch_size)) {
      const auto end = std::min(order.size(), begin + static_cast<size_t>(batch_size));
      const std::vector<int64_t> indices(order.begin() + static_cast<std::ptrdiff_t>(begin),
                                         order.begin() + static_cast<std::ptrdiff_t>(end));
      const auto batch = load_batch(train_set, indices, epoch, strides);
      StepRecord record;
      try {
        record.losses = train_step(model, optimizer, batch, lambda);
      } catch (const DivergenceError& e) {
        throw DivergenceError(std::string(e.what()) + " at step " + std::to_string(result.steps + 1) +
                              "; last good checkpoint: " + result.last_checkpoint.string());
      }
      record.step = ++result.steps;
      record.epoch = epoch;
      result.log.push_back(record);
      if (log.is_open()) log << loss_log_row(record) << "\n" << std::flush;
      if (options.on_step) options.on_step(record);
      if (options.verbose) {
        std::cerr << "epoch " << epoch + 1 << " step " << record.step << " loss " << record.losses.total << "\n";
      }
      if (config.train.max_steps > 0 && result.steps >= config.train.max_steps) {
        stop = true;
        break;
      }
    }
    json metrics = json::object();
    const bool run_eval = val_set != nullptr && val_set->size() > 0 &&
                          ((epoch + 1) % config.train.eval_interval == 0 || stop ||
                           epoch + 1 == config.train.epochs);
    if (run_eval) {
      EvalOptions eval_options;
      eval_options.tile_stride = config.data.tile_stride;
      eval_options.tile_size = config.data.crop_size;
      metrics = evaluate(model, *val_set, eval_options).summary.to_json();
    }
    result.last_checkpoint = root / epoch_dir_name(epoch + 1);
    save_checkpoint(result.last_checkpoint, model, &optimizer, make_manifest(epoch + 1, metrics));
    result.epochs_completed = epoch + 1;
    if (run_eval && metrics.value("f1", -1.0) > best_f1) {
      best_f1 = metrics.value("f1", -1.0);
      copy_dir(result.last_checkpoint, root / "best");
      result.best_checkpoint = root / "best";
    }
  }
  if (result.epochs_completed == 0) result.epochs_completed = start_epoch;
  std::ofstream(root / "LATEST") << result.last_checkpoint.filename().string() << "\n";
  result.param_checksum = checksum_hex(parameter_checksum(*model));
  return result;
}

// ---------------------------------------------------------------------------
// Evaluation
// ---------------------------------------------------------------------------

namespace {

int64_t round_up(int64_t v, int64_t m) { return (v + m - 1) / m * m; }

torch::Tensor pad_to(const torch::Tensor& image, int64_t height, int64_t width) {
  if (image.size(1) == height && image.size(2) == width) return image;
  return F::pad(image.unsqueeze(0),
                F::PadFuncOptions({0, width - image.size(2), 0, height - image.size(1)}).mode(torch::kReplicate))
      .squeeze(0);
}

}  // namespace

PredictionBundle predict_full(HnsNet& model, const torch::Tensor& image, int tile_size, int tile_stride) {
  if (image.dim() != 3 || image.size(0) != 3) throw ValidationError("image must be [3, H, W]");
  torch::NoGradGuard no_grad;
  model->eval();
  const int64_t h = image.size(1), w = image.size(2);
  const auto param = *model->parameters().begin();
  auto input = image.to(param.dtype());

  PredictionBundle out;
  if (tile_stride <= 0) {
    auto padded = pad_to(input, round_up(h, kEncoderStride), round_up(w, kEncoderStride));
    out = model->forward(padded);
  } else {
    if (tile_size % kEncoderStride != 0 || tile_stride % kEncoderStride != 0) {
      throw ValidationError("tile size and stride must be multiples of 32");
    }
    auto span = [&](int64_t extent) {
      const int64_t steps = extent <= tile_size ? 0 : (extent - tile_size + tile_stride - 1) / tile_stride;
      return tile_size + steps * tile_stride;
    };
    const int64_t ph = span(h), pw = span(w);
    auto padded = pad_to(input, ph, pw);
    torch::Tensor road_sum, road_count;
    std::vector<torch::Tensor> border_sum, border_count;
    for (int64_t r = 0; r + tile_size <= ph; r += tile_stride) {
      for (int64_t c = 0; c + tile_size <= pw; c += tile_stride) {
        auto tile = padded.slice(1, r, r + tile_size).slice(2, c, c + tile_size);
        auto b = model->forward(tile);
        if (!road_sum.defined()) {
          road_sum = torch::zeros({1, 1, ph, pw}, b.road_prob.options());
          road_count = torch::zeros_like(road_sum);
          out.border_levels = b.border_levels;
          out.border_strides = b.border_strides;
          for (int s : b.border_strides) {
            border_sum.push_back(torch::zeros({1, 1, ph / s, pw / s}, b.road_prob.options()));
            border_count.push_back(torch::zeros_like(border_sum.back()));
          }
        }
        road_sum.slice(2, r, r + tile_size).slice(3, c, c + tile_size).add_(b.road_prob);
        road_count.slice(2, r, r + tile_size).slice(3, c, c + tile_size).add_(1.0);
        for (size_t i = 0; i < b.border_probs.size(); ++i) {
          const int s = b.border_strides[i];
          border_sum[i].slice(2, r / s, (r + tile_size) / s).slice(3, c / s, (c + tile_size) / s).add_(b.border_probs[i]);
          border_count[i].slice(2, r / s, (r + tile_size) / s).slice(3, c / s, (c + tile_size) / s).add_(1.0);
        }
      }
    }
    out.road_prob = road_sum / road_count;
    out.road_logits = torch::logit(out.road_prob.clamp(kProbabilityEpsilon, 1.0 - kProbabilityEpsilon));
    for (size_t i = 0; i < border_sum.size(); ++i) out.border_probs.push_back(border_sum[i] / border_count[i]);
  }
  out.road_prob = out.road_prob.slice(2, 0, h).slice(3, 0, w);
  out.road_logits = out.road_logits.slice(2, 0, h).slice(3, 0, w);
  for (size_t i = 0; i < out.border_probs.size(); ++i) {
    const int s = out.border_strides[i];
    out.border_probs[i] = out.border_probs[i].slice(2, 0, (h + s - 1) / s).slice(3, 0, (w + s - 1) / s);
  }
  return out;
}

EvalResult evaluate_predictor(const RoadPredictor& predictor, const Dataset& dataset, const EvalOptions& options) {
  const int64_t n = options.max_images > 0 ? std::min(options.max_images, dataset.size()) : dataset.size();
  if (n == 0) throw ValidationError("evaluation split is empty");
  EvalResult result;
  std::vector<MetricReport> reports;
  for (int64_t i = 0; i < n; ++i) {
    auto tile = dataset.source().load(i);
    auto prob = predictor(tile.image, i);
    auto pred = Mask::from_tensor(prob, options.threshold);
    if (pred.height() != tile.mask.height() || pred.width() != tile.mask.width()) {
      throw ValidationError("prediction size does not match ground truth for " + tile.name);
    }
    auto report = evaluate_masks(pred, tile.mask);
    reports.push_back(report);
    result.per_image.emplace_back(tile.name, report);
    if (!options.overlay_dir.empty()) {
      write_image(options.overlay_dir / (tile.name + "_overlay.png"), render_overlay(tile.image, pred, nullptr));
    }
  }
  result.summary = aggregate(reports, options.averaging);
  return result;
}

EvalResult evaluate(HnsNet& model, const Dataset& dataset, const EvalOptions& options) {
  const bool was_training = model->is_training();
  auto result = evaluate_predictor(
      [&](const torch::Tensor& image, int64_t) {
        return predict_full(model, image, options.tile_size, options.tile_stride).road_prob[0][0];
      },
      dataset, options);
  model->train(was_training);
  return result;
}

EvalResult evaluate_checkpoint(const fs::path& checkpoint, const Dataset& dataset, const EvalOptions& options,
                               const RunConfig* expected) {
  auto model = load_model(checkpoint, expected);
  return evaluate(model, dataset, options);
}

json EvalResult::to_json(Averaging averaging) const {
  json j = summary.to_json();
  j["averaging"] = averaging == Averaging::Micro ? "micro" : "macro";
  j["images"] = per_image.size();
  json per = json::object();
  for (const auto& [name, report] : per_image) per[name] = report.to_json();
  j["per_image"] = per;
  j["reference"] = {{"note", "published full-protocol Massachusetts test results; not reproduced at desk scale"},
                    {"iou", 62.94},
                    {"f1", 76.96}};
  return j;
}

void write_json(const fs::path& path, const json& j) {
  if (path.has_parent_path()) fs::create_directories(path.parent_path());
  std::ofstream out(path);
  out << std::setw(2) << j << "\n";
  if (!out) throw IoError("cannot write " + path.string());
}

// ---------------------------------------------------------------------------
// Ablation
// ---------------------------------------------------------------------------

double reference_f1(Variant v) {
  switch (v) {
    case Variant::BU: return 74.95;
    case Variant::SG: return 75.67;
    case Variant::E1: return 75.78;
    case Variant::E2: return 76.89;
    case Variant::Full: return 76.96;
  }
  return 0.0;
}

AblationTable ablate(const RunConfig& base, const std::vector<Variant>& variants, const Dataset& train_set,
                     const Dataset& eval_set, bool smoke, const fs::path& output_dir) {
  AblationTable table;
  for (Variant v : variants) {
    AblationRow row;
    row.variant = v;
    try {
      RunConfig config = base;
      config.model.apply_variant(v);
      if (smoke) {
        config.train.epochs = 1;
        config.train.max_steps = 1;
      }
      TrainOptions options;
      options.checkpoint_root = output_dir / "checkpoints" / std::string(to_string(v));
      options.log_csv = output_dir / ("train_log_" + std::string(to_string(v)) + ".csv");
      auto trained = train(config, train_set, nullptr, options);
      row.steps = trained.steps;
      row.final_loss = trained.log.empty() ? 0.0 : trained.log.back().losses.total;
      if (!std::isfinite(row.final_loss)) throw DivergenceError("non-finite loss");
      auto model = load_model(trained.last_checkpoint, &config);
      row.parameters = model->parameter_count();
      EvalOptions eval_options;
      eval_options.tile_size = config.data.crop_size;
      eval_options.tile_stride = config.data.tile_stride;
      row.report = evaluate(model, eval_set, eval_options).summary;
      row.ok = true;
    } catch (const std::exception& e) {
      row.ok = false;
      row.error = e.what();
      table.rows.push_back(row);
      table.partial = true;
      break;
    }
    table.rows.push_back(row);
  }
  return table;
}

void write_ablation_table(const AblationTable& table, const fs::path& csv_path, const fs::path& json_path) {
  if (csv_path.has_parent_path()) fs::create_directories(csv_path.parent_path());
  std::ofstream csv(csv_path);
  csv << std::setprecision(10);
  csv << "variant,status,steps,parameters,final_loss,iou,precision,recall,f1";
  for (int t = 1; t <= kMaxBoundaryThreshold; ++t) csv << ",boundary_f" << t;
  csv << ",reference_f1\n";
  json rows = json::array();
  for (const auto& r : table.rows) {
    csv << to_string(r.variant) << "," << (r.ok ? "ok" : "failed") << "," << r.steps << "," << r.parameters << ","
        << r.final_loss << "," << r.report.iou << "," << r.report.precision << "," << r.report.recall << ","
        << r.report.f1;
    for (int t = 1; t <= kMaxBoundaryThreshold; ++t) {
      auto it = r.report.boundary_f.find(t);
      csv << "," << (it == r.report.boundary_f.end() ? 0.0 : it->second);
    }
    csv << "," << reference_f1(r.variant) << "\n";
    json jr = {{"variant", std::string(to_string(r.variant))},
               {"ok", r.ok},
               {"steps", r.steps},
               {"parameters", r.parameters},
               {"final_loss", r.final_loss},
               {"reference_f1", reference_f1(r.variant)},
               {"metrics", r.report.to_json()}};
    if (!r.ok) jr["error"] = r.error;
    rows.push_back(jr);
  }
  csv << "# reference F1 (%) on the full Massachusetts protocol: BU 74.95, SG 75.67, E1 75.78, E2 76.89, "
         "full 76.96; not reproducible at desk scale\n";
  if (table.partial) csv << "# PARTIAL: a variant failed and the table was aborted\n";
  if (!csv) throw IoError("cannot write " + csv_path.string());
  write_json(json_path, {{"rows", rows},
                         {"partial", table.partial},
                         {"reference_note", "published F1 on the full Massachusetts protocol; not reproduced here"}});
}

}  // namespace hns
