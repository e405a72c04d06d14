#include <algorithm>
#include <cmath>

#include "hsi/trainers.hpp"
#include "train_common.hpp"

namespace hsi {

namespace detail {

namespace {

double reconstruct(const Network& net, const ParamStore& params, const Network& decoder,
                   const ParamStore& dparams, std::span<const double> x, int tap,
                   Trace* enc_trace, Trace* dec_trace) {
  Trace tr = net.forward_to(params, x, DropoutMode::kOff, nullptr, tap);
  Trace dt = decoder.forward(dparams, tr.acts[tap], DropoutMode::kOff, nullptr);
  const auto& y = dt.acts.back();
  double mse = 0.0;
  for (std::size_t k = 0; k < y.size(); ++k) mse += (y[k] - x[k]) * (y[k] - x[k]);
  mse /= static_cast<double>(y.size());
  if (enc_trace) *enc_trace = std::move(tr);
  if (dec_trace) *dec_trace = std::move(dt);
  return mse;
}

}  // namespace

TrainedModel fit_classifier(const NetworkSpec& spec, Shape3 input, ParamStore params,
                            const PatchSet& labeled, const TrainConfig& cfg, int stop_layer,
                            ReconSetup* recon) {
  cfg.validate();
  if (labeled.size() == 0) throw ArgumentError("training needs a nonempty labeled set");
  labeled.require_labeled("training set");
  if (!spec.ends_in_softmax()) throw StructureError("network must end in a softmax layer");
  const int classes = spec.num_classes();
  if (labeled.num_classes() > classes) {
    throw StructureError("labels reach class " + std::to_string(labeled.num_classes()) +
                         " but the softmax has " + std::to_string(classes) + " outputs");
  }
  if (!(patch_shape(labeled) == input)) {
    throw ShapeError("patches " + to_string(patch_shape(labeled)) + " do not match network input " +
                     to_string(input));
  }
  const Network net(spec, input);
  TrainedModel model;
  model.spec = spec;
  model.input = input;
  model.config_hash = cfg.hash();
  model.seed = cfg.seed;

  Rng order_rng(mix_seed(cfg.seed, kOrderStream));
  Rng drop_rng(mix_seed(cfg.seed, kDropoutStream));
  Rng recon_rng(mix_seed(cfg.seed, kReconStream));
  Sgd opt(params, cfg.learning_rate, cfg.momentum);
  ParamStore grads = params.zeros_like();
  std::optional<Sgd> dec_opt;
  ParamStore dec_grads;
  std::vector<std::size_t> probe;
  if (recon) {
    dec_opt.emplace(*recon->decoder_params, cfg.learning_rate, cfg.momentum);
    dec_grads = recon->decoder_params->zeros_like();
    Rng probe_rng(mix_seed(cfg.seed, kReconStream + 100));
    probe = permutation(recon->pool->size(), probe_rng);
    probe.resize(std::min<std::size_t>(probe.size(), 256));
  }

  for (int epoch = 0; epoch < cfg.epochs; ++epoch) {
    const auto order = permutation(labeled.size(), order_rng);
    double loss_sum = 0.0, recon_sum = 0.0;
    std::size_t correct = 0;
    for (const auto& batch : batches_of(order, cfg.batch_size)) {
      grads.set_zero();
      const double inv = 1.0 / static_cast<double>(batch.size());
      for (std::size_t i : batch) {
        const Trace tr = net.forward(params, labeled.sample(i), DropoutMode::kSample, &drop_rng);
        const auto& p = tr.acts.back();
        const int y = labeled.labels[i] - 1;
        loss_sum += -std::log(std::max(p[y], 1e-300));
        correct += static_cast<int>(argmax(p)) == y;
        GradSeeds seeds(net.num_taps());
        seeds.logits = cross_entropy_logit_grad(p, y);
        for (auto& g : seeds.logits) g *= inv;
        net.backward(params, tr, seeds, grads, stop_layer);
      }
      if (recon && recon->lambda > 0.0) {
        dec_grads.set_zero();
        const std::size_t n = batch.size();
        const double scale = recon->lambda / static_cast<double>(n);
        const Network& dec = *recon->decoder;
        for (std::size_t q = 0; q < n; ++q) {
          const auto x = recon->pool->sample(uniform_index(recon_rng, recon->pool->size()));
          Trace et, dt;
          recon_sum += reconstruct(net, params, dec, *recon->decoder_params, x, recon->tap, &et,
                                   &dt) / static_cast<double>(n);
          const auto& yhat = dt.acts.back();
          GradSeeds dseeds(dec.num_taps());
          dseeds.taps.back().resize(yhat.size());
          for (std::size_t k = 0; k < yhat.size(); ++k) {
            dseeds.taps.back()[k] = scale * 2.0 * (yhat[k] - x[k]) / static_cast<double>(yhat.size());
          }
          std::vector<double> gz;
          dec.backward(*recon->decoder_params, dt, dseeds, dec_grads, 0, &gz);
          GradSeeds eseeds(net.num_taps());
          eseeds.taps[recon->tap] = std::move(gz);
          net.backward(params, et, eseeds, grads, stop_layer);
        }
        dec_opt->step(*recon->decoder_params, dec_grads, 1.0);
      }
      opt.step(params, grads, 1.0, static_cast<std::size_t>(stop_layer));
    }
    const double loss = loss_sum / static_cast<double>(labeled.size());
    const double acc = static_cast<double>(correct) / static_cast<double>(labeled.size());
    require_finite(loss, "cross entropy", epoch);
    EpochRecord rec;
    rec.epoch = epoch + 1;
    if (recon) {
      double mse = 0.0;
      for (auto i : probe) {
        mse += reconstruct(net, params, *recon->decoder, *recon->decoder_params,
                           recon->pool->sample(i), recon->tap, nullptr, nullptr);
      }
      mse /= static_cast<double>(std::max<std::size_t>(probe.size(), 1));
      require_finite(mse, "reconstruction error", epoch);
      rec.values = {{"ce", loss},
                    {"recon", mse},
                    {"total", loss + recon->lambda * mse},
                    {"accuracy", acc}};
    } else {
      rec.values = {{"loss", loss}, {"accuracy", acc}};
    }
    model.history.push_back(std::move(rec));
  }
  if (!params.all_finite()) throw TrainingError("parameters became non-finite");
  model.params = std::move(params);
  return model;
}

}  // namespace detail

TrainedModel train_supervised(const NetworkSpec& spec, const PatchSet& labeled,
                              const TrainConfig& cfg) {
  validate(spec);
  const Shape3 input = patch_shape(labeled);
  if (spec.input_bands != labeled.bands) {
    throw ShapeError("network expects " + std::to_string(spec.input_bands) + " bands, patches have " +
                     std::to_string(labeled.bands));
  }
  auto params = init_params(spec, input, mix_seed(cfg.seed, detail::kInitStream));
  return detail::fit_classifier(spec, input, std::move(params), labeled, cfg, 0);
}

TrainedModel train_semisup_recon(const NetworkSpec& spec, const PatchSet& labeled,
                                 const PatchSet& unlabeled, const TrainConfig& cfg) {
  validate(spec);
  cfg.validate();
  if (spec.has_recurrent()) {
    throw UnsupportedStructureError(
        "reconstruction-regularised training needs a feedforward trunk (no recurrent layers)");
  }
  if (!spec.ends_in_softmax()) throw StructureError("network must end in a softmax layer");
  const Shape3 input = patch_shape(labeled);
  if (spec.input_bands != labeled.bands) {
    throw ShapeError("network expects " + std::to_string(spec.input_bands) + " bands, patches have " +
                     std::to_string(labeled.bands));
  }
  if (unlabeled.size() > 0 && !(patch_shape(unlabeled) == input)) {
    throw ShapeError("labeled and unlabeled patches differ in shape");
  }
  NetworkSpec trunk = spec;
  trunk.layers.pop_back();
  const DecoderSpec dspec = mirrored_decoder(trunk, input);
  const Network decoder(dspec.spec, dspec.input);
  ParamStore dparams =
      init_params(dspec.spec, dspec.input, mix_seed(cfg.seed, detail::kDecoderInitStream));
  PatchSet pool = labeled;
  pool.append(unlabeled);
  detail::ReconSetup recon{&decoder, &dparams, &pool, cfg.lambda_recon,
                           static_cast<int>(spec.layers.size()) - 1};
  auto params = init_params(spec, input, mix_seed(cfg.seed, detail::kInitStream));
  TrainedModel model =
      detail::fit_classifier(spec, input, std::move(params), labeled, cfg, 0, &recon);
  model.decoder = dspec;
  model.decoder_params = std::move(dparams);
  return model;
}

Evaluation evaluate(const TrainedModel& model, const PatchSet& test) {
  if (test.size() == 0) throw ArgumentError("evaluation needs a nonempty test set");
  test.require_labeled("test set");
  const Network net(model.spec, model.input);
  return evaluate_labels(test.labels, predict_labels(net, model.params, test),
                         model.spec.num_classes());
}

}  // namespace hsi
