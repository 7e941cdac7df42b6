// Serves a seeded product model over the marginals protocol, for trying
// the remote backend without model weights.
//
//   maskctrl_mock_server --port 8080 --length 50 --vocab 20 [--seed S]

#include <iostream>

#include "CLI11.hpp"
#include "httplib.h"
#include "json.hpp"
#include "maskctrl/models.hpp"

int main(int argc, char** argv) {
  CLI::App app{"Mock masked-model server"};
  int port = 8080;
  std::size_t length = 50, vocab = 20;
  std::uint64_t seed = 0;
  double sharpness = 1.0;
  std::string host = "127.0.0.1";
  bool mask_column = false;
  app.add_option("--host", host);
  app.add_option("--port", port);
  app.add_option("--length", length);
  app.add_option("--vocab", vocab);
  app.add_option("--seed", seed);
  app.add_option("--sharpness", sharpness);
  app.add_flag("--mask-column", mask_column, "Append a zero mask column to every row");
  CLI11_PARSE(app, argc, argv);

  const auto model = maskctrl::ProductModel::random(length, vocab, seed, sharpness);
  httplib::Server server;
  server.Post("/v1/marginals", [&](const httplib::Request& req, httplib::Response& res) {
    try {
      const auto j = nlohmann::json::parse(req.body);
      nlohmann::json out = {{"marginals", nlohmann::json::array()}};
      for (const auto& seq : j.at("sequences")) {
        const maskctrl::MaskedSequence x(seq.get<std::vector<maskctrl::Token>>(), vocab);
        const auto m = model.predict(x);
        nlohmann::json rows = nlohmann::json::array();
        for (std::size_t d = 0; d < length; ++d) {
          auto r = m.row(d);
          std::vector<double> row(r.begin(), r.end());
          if (mask_column) row.push_back(0.0);
          rows.push_back(row);
        }
        out["marginals"].push_back(std::move(rows));
      }
      res.set_content(out.dump(), "application/json");
    } catch (const std::exception& e) {
      res.status = 400;
      res.set_content(e.what(), "text/plain");
    }
  });
  std::cout << "listening on http://" << host << ':' << port << std::endl;
  return server.listen(host, port) ? 0 : 1;
}
