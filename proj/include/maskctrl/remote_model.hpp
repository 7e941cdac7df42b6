#pragma once

// HTTP/JSON client for out-of-process masked models (e.g. an ESM server).
//
// Wire format:
//   POST {base}/v1/marginals
//   {"vocab_size": N, "mask_id": N, "sequences": [[int, ...], ...]}
//   -> {"marginals": [[[p × N or N+1] × D], ...]}
// Columns beyond N (e.g. a mask column) and any configured invalid ids are
// zeroed before the row is renormalised.

#include <chrono>
#include <cstddef>
#include <optional>
#include <span>
#include <string>
#include <vector>

#include "maskctrl/models.hpp"

namespace maskctrl {

struct ModelEndpoint {
  std::string base_url;  // e.g. "http://localhost:8080"
  std::chrono::milliseconds timeout{30'000};
  std::size_t max_retries = 2;  // attempts = 1 + max_retries
  std::chrono::milliseconds retry_backoff{200};
  std::size_t batch_limit = 16;
  std::size_t max_in_flight = 4;
  std::optional<std::string> auth_token;
  std::vector<Token> invalid_ids;
  /// Raw rows must sum to 1 within this tolerance before any column is zeroed.
  double row_tolerance = 1e-3;

  /// Throws ConfigError.
  void validate() const;
  /// Reads MASKCTRL_AUTH_TOKEN if no token is set.
  ModelEndpoint with_env_token() const;
};

/// Request body for a batch.
std::string encode_marginals_request(std::span<const MaskedSequence> batch);

/// Parses and post-validates a response body. Throws ProtocolError for a
/// malformed payload or shape mismatch and ValidationError for rows that are
/// not stochastic within `row_tolerance`.
std::vector<ConditionalMarginals> decode_marginals_response(
    const std::string& body, std::span<const MaskedSequence> batch,
    std::span<const Token> invalid_ids, double row_tolerance);

/// Splits into at most batch_limit sequences per request and keeps up to
/// max_in_flight requests open at once. Each request owns its connection
/// and response buffer. Network errors, timeouts and 5xx responses are
/// retried; exhausting the retries throws TransportError with no partial
/// result.
std::vector<ConditionalMarginals> remote_predict(const ModelEndpoint& endpoint,
                                                 std::span<const MaskedSequence> batch);

class RemoteModel final : public MaskedModel {
 public:
  RemoteModel(ModelEndpoint endpoint, std::size_t length, std::size_t vocab_size);

  std::size_t length() const override { return length_; }
  std::size_t vocab_size() const override { return vocab_; }
  ConditionalMarginals predict(const MaskedSequence& x) const override;
  std::vector<ConditionalMarginals> predict_batch(
      std::span<const MaskedSequence> xs) const override;

  const ModelEndpoint& endpoint() const noexcept { return endpoint_; }

 private:
  ModelEndpoint endpoint_;
  std::size_t length_;
  std::size_t vocab_;
};

}  // namespace maskctrl
