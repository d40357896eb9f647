#pragma once

// Reconstruction auto-encoder used by the "AE" baseline: one tanh encoder
// layer whose outputs serve as embeddings, and a linear decoder.

#include <span>
#include <vector>

#include "jsae/nn.hpp"

namespace jsae {

struct Autoencoder {
  Mlp encoder;  // in -> k, tanh
  Mlp decoder;  // k -> in, identity
};

struct AutoencoderGrads {
  Mlp encoder, decoder;
};

inline Autoencoder make_autoencoder(std::size_t input_dim, std::size_t code_dim, Rng& rng) {
  return {make_mlp(input_dim, {}, code_dim, Activation::tanh, rng),
          make_mlp(code_dim, {}, input_dim, Activation::identity, rng)};
}

inline std::vector<double> encode(const Autoencoder& ae, std::span<const double> x) {
  return mlp_forward(ae.encoder, x);
}

/// Mean squared reconstruction error over `inputs`; gradient added to `grads`.
inline double autoencoder_loss(const Autoencoder& ae, std::span<const std::vector<double>> inputs,
                               AutoencoderGrads* grads = nullptr) {
  if (inputs.empty()) throw ConfigError("autoencoder_loss: empty batch");
  const double scale = 1.0 / static_cast<double>(inputs.size());
  ForwardCache enc_cache, dec_cache;
  double total = 0.0;
  for (const auto& x : inputs) {
    const auto code = mlp_forward(ae.encoder, x, grads ? &enc_cache : nullptr);
    const auto recon = mlp_forward(ae.decoder, code, grads ? &dec_cache : nullptr);
    auto lg = mse_loss(recon, x);
    total += lg.loss;
    if (grads) {
      for (double& g : lg.grad) g *= scale;
      const auto d_code = mlp_backward(ae.decoder, dec_cache, lg.grad, grads->decoder, true);
      mlp_backward(ae.encoder, enc_cache, d_code, grads->encoder, false);
    }
  }
  return total * scale;
}

/// Minibatch Adam on the reconstruction loss; returns the final full-data loss.
inline double train_autoencoder(Autoencoder& ae, const std::vector<std::vector<double>>& data, std::size_t epochs,
                                std::size_t batch, double learning_rate, Rng& rng) {
  if (data.empty()) throw ConfigError("train_autoencoder: no data");
  if (batch == 0) throw ConfigError("train_autoencoder: batch must be positive");
  Adam enc_opt(ae.encoder, AdamConfig{learning_rate});
  Adam dec_opt(ae.decoder, AdamConfig{learning_rate});
  std::vector<std::size_t> order(data.size());
  for (std::size_t i = 0; i < order.size(); ++i) order[i] = i;
  std::vector<std::vector<double>> mb;
  for (std::size_t epoch = 0; epoch < epochs; ++epoch) {
    shuffle(order, rng);
    for (std::size_t begin = 0; begin < order.size(); begin += batch) {
      const std::size_t end = std::min(order.size(), begin + batch);
      mb.clear();
      for (std::size_t i = begin; i < end; ++i) mb.push_back(data[order[i]]);
      AutoencoderGrads g{ae.encoder.zeros_like(), ae.decoder.zeros_like()};
      const double l = autoencoder_loss(ae, mb, &g);
      if (!std::isfinite(l)) throw NumericalError("autoencoder: non-finite loss");
      enc_opt.step(ae.encoder, g.encoder);
      dec_opt.step(ae.decoder, g.decoder);
    }
  }
  return autoencoder_loss(ae, data);
}

}  // namespace jsae
