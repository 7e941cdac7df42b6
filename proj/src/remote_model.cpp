#include "maskctrl/remote_model.hpp"

#include <algorithm>
#include <cmath>
#include <cstdlib>
#include <future>
#include <thread>

#include "httplib.h"
#include "json.hpp"
#include "maskctrl/errors.hpp"

namespace maskctrl {

void ModelEndpoint::validate() const {
  if (base_url.empty()) throw ConfigError("endpoint URL is empty");
  if (batch_limit == 0) throw ConfigError("endpoint batch limit must be >= 1");
  if (max_in_flight == 0) throw ConfigError("endpoint max_in_flight must be >= 1");
  if (!(row_tolerance >= 0.0)) throw ConfigError("row tolerance must be >= 0");
}

ModelEndpoint ModelEndpoint::with_env_token() const {
  ModelEndpoint e = *this;
  if (!e.auth_token) {
    if (const char* tok = std::getenv("MASKCTRL_AUTH_TOKEN"); tok && *tok) e.auth_token = tok;
  }
  return e;
}

std::string encode_marginals_request(std::span<const MaskedSequence> batch) {
  if (batch.empty()) throw std::invalid_argument("empty batch");
  nlohmann::json j;
  j["vocab_size"] = batch.front().vocab_size();
  j["mask_id"] = batch.front().mask();
  auto& seqs = j["sequences"] = nlohmann::json::array();
  for (const auto& x : batch) {
    if (x.vocab_size() != batch.front().vocab_size())
      throw std::invalid_argument("batch mixes vocabularies");
    seqs.push_back(std::vector<Token>(x.tokens().begin(), x.tokens().end()));
  }
  return j.dump();
}

std::vector<ConditionalMarginals> decode_marginals_response(
    const std::string& body, std::span<const MaskedSequence> batch,
    std::span<const Token> invalid_ids, double row_tolerance) {
  nlohmann::json j;
  try {
    j = nlohmann::json::parse(body);
  } catch (const nlohmann::json::exception& e) {
    throw ProtocolError(std::string("response is not JSON: ") + e.what());
  }
  if (!j.is_object() || !j.contains("marginals") || !j["marginals"].is_array())
    throw ProtocolError("response has no \"marginals\" array");
  const auto& all = j["marginals"];
  if (all.size() != batch.size())
    throw ProtocolError("response holds " + std::to_string(all.size()) +
                        " matrices for a batch of " + std::to_string(batch.size()));

  std::vector<ConditionalMarginals> out;
  out.reserve(batch.size());
  for (std::size_t b = 0; b < batch.size(); ++b) {
    const auto& x = batch[b];
    const std::size_t D = x.length(), N = x.vocab_size();
    const auto& mat = all[b];
    if (!mat.is_array() || mat.size() != D)
      throw ProtocolError("marginal matrix " + std::to_string(b) + " does not have D rows");
    auto m = ConditionalMarginals::skeleton(x);
    for (std::size_t d = 0; d < D; ++d) {
      const auto& row = mat[d];
      if (!row.is_array() || row.size() < N)
        throw ProtocolError("row " + std::to_string(d) + " has fewer than N columns");
      if (!x.is_masked(d)) continue;  // observed rows are one-hot by construction
      std::vector<double> raw(row.size());
      double raw_sum = 0.0;
      for (std::size_t n = 0; n < row.size(); ++n) {
        if (!row[n].is_number()) throw ProtocolError("non-numeric probability");
        raw[n] = row[n].get<double>();
        if (!std::isfinite(raw[n]) || raw[n] < 0.0)
          throw ValidationError("row " + std::to_string(d) + " has a negative or non-finite entry");
        raw_sum += raw[n];
      }
      if (std::abs(raw_sum - 1.0) > row_tolerance)
        throw ValidationError("row " + std::to_string(d) + " sums to " + std::to_string(raw_sum));
      for (Token id : invalid_ids)
        if (id >= 0 && static_cast<std::size_t>(id) < raw.size()) raw[static_cast<std::size_t>(id)] = 0.0;
      double kept = 0.0;
      for (std::size_t n = 0; n < N; ++n) kept += raw[n];
      if (!(kept > 0.0))
        throw ValidationError("row " + std::to_string(d) + " has no mass on valid tokens");
      auto dst = m.row(d);
      for (std::size_t n = 0; n < N; ++n) dst[n] = raw[n] / kept;
    }
    m.validate();
    out.push_back(std::move(m));
  }
  return out;
}

namespace {

std::vector<ConditionalMarginals> post_chunk(const ModelEndpoint& endpoint,
                                             std::span<const MaskedSequence> chunk) {
  const std::string body = encode_marginals_request(chunk);
  std::string last_error;
  for (std::size_t attempt = 0; attempt <= endpoint.max_retries; ++attempt) {
    if (attempt > 0) std::this_thread::sleep_for(endpoint.retry_backoff * attempt);
    httplib::Client client(endpoint.base_url);
    const auto secs = std::chrono::duration_cast<std::chrono::seconds>(endpoint.timeout);
    const auto usecs =
        std::chrono::duration_cast<std::chrono::microseconds>(endpoint.timeout - secs);
    client.set_connection_timeout(secs.count(), usecs.count());
    client.set_read_timeout(secs.count(), usecs.count());
    client.set_write_timeout(secs.count(), usecs.count());
    httplib::Headers headers;
    if (endpoint.auth_token) headers.emplace("Authorization", "Bearer " + *endpoint.auth_token);
    auto res = client.Post("/v1/marginals", headers, body, "application/json");
    if (!res) {
      last_error = httplib::to_string(res.error());
      continue;
    }
    if (res->status >= 500) {
      last_error = "HTTP " + std::to_string(res->status);
      continue;
    }
    if (res->status != 200)
      throw ProtocolError("endpoint answered HTTP " + std::to_string(res->status) + ": " +
                          res->body.substr(0, 200));
    std::vector<Token> invalid = endpoint.invalid_ids;
    invalid.push_back(chunk.front().mask());
    return decode_marginals_response(res->body, chunk, invalid, endpoint.row_tolerance);
  }
  throw TransportError("endpoint " + endpoint.base_url + " failed after " +
                       std::to_string(endpoint.max_retries + 1) + " attempts: " + last_error);
}

}  // namespace

std::vector<ConditionalMarginals> remote_predict(const ModelEndpoint& endpoint,
                                                 std::span<const MaskedSequence> batch) {
  endpoint.validate();
  if (batch.empty()) throw std::invalid_argument("empty batch");
  const std::size_t chunks = (batch.size() + endpoint.batch_limit - 1) / endpoint.batch_limit;
  std::vector<std::vector<ConditionalMarginals>> parts(chunks);
  for (std::size_t wave = 0; wave < chunks; wave += endpoint.max_in_flight) {
    std::vector<std::future<std::vector<ConditionalMarginals>>> inflight;
    const std::size_t end = std::min(chunks, wave + endpoint.max_in_flight);
    for (std::size_t c = wave; c < end; ++c) {
      const std::size_t lo = c * endpoint.batch_limit;
      const std::size_t n = std::min(endpoint.batch_limit, batch.size() - lo);
      inflight.push_back(std::async(std::launch::async, post_chunk, std::cref(endpoint),
                                    batch.subspan(lo, n)));
    }
    // get() on every future before rethrowing, so no request outlives the call.
    std::exception_ptr first_error;
    for (std::size_t i = 0; i < inflight.size(); ++i) {
      try {
        parts[wave + i] = inflight[i].get();
      } catch (...) {
        if (!first_error) first_error = std::current_exception();
      }
    }
    if (first_error) std::rethrow_exception(first_error);
  }
  std::vector<ConditionalMarginals> out;
  out.reserve(batch.size());
  for (auto& p : parts)
    for (auto& m : p) out.push_back(std::move(m));
  return out;
}

RemoteModel::RemoteModel(ModelEndpoint endpoint, std::size_t length, std::size_t vocab_size)
    : endpoint_(std::move(endpoint)), length_(length), vocab_(vocab_size) {
  endpoint_.validate();
  if (length == 0 || vocab_size == 0)
    throw std::invalid_argument("length and vocabulary size must be positive");
}

ConditionalMarginals RemoteModel::predict(const MaskedSequence& x) const {
  auto out = predict_batch(std::span<const MaskedSequence>(&x, 1));
  return std::move(out.front());
}

std::vector<ConditionalMarginals> RemoteModel::predict_batch(
    std::span<const MaskedSequence> xs) const {
  for (const auto& x : xs) check_input(x);
  return remote_predict(endpoint_, xs);
}

}  // namespace maskctrl
