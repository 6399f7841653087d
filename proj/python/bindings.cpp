// Python surface: configuration, training, the digital link, sweeps and metrics.

#include <pybind11/functional.h>
#include <pybind11/numpy.h>
#include <pybind11/pybind11.h>
#include <pybind11/stl.h>
#include <pybind11/stl/filesystem.h>

#include <memory>

#include "vqdisc/harness.hpp"
#include "vqdisc/image_io.hpp"

namespace py = pybind11;
using namespace vqdisc;
namespace h = vqdisc::harness;

namespace {

using Array = py::array_t<float, py::array::c_style | py::array::forcecast>;

Tensor to_tensor(const Array& a)
{
    if (a.ndim() != 3) throw ContractError("expected an HxWxC image array");
    Tensor t({static_cast<std::size_t>(a.shape(0)), static_cast<std::size_t>(a.shape(1)),
              static_cast<std::size_t>(a.shape(2))});
    std::copy(a.data(), a.data() + a.size(), t.data.begin());
    return t;
}

Array to_array(const Tensor& t)
{
    std::vector<py::ssize_t> shape(t.shape.begin(), t.shape.end());
    Array out(shape);
    std::copy(t.data.begin(), t.data.end(), out.mutable_data());
    return out;
}

py::dict row_dict(const h::SweepRow& r)
{
    py::dict d;
    d["snr_db"] = r.snr_db;
    d["psnr_db"] = r.report.psnr_db;
    d["ms_ssim"] = r.report.ms_ssim;
    d["ber"] = r.report.ber;
    d["bcr"] = r.report.bcr;
    d["perplexity"] = r.report.perplexity;
    d["kld"] = r.report.kld;
    return d;
}

h::Dataset dataset_from(const std::vector<Array>& images)
{
    h::Dataset d;
    for (std::size_t i = 0; i < images.size(); ++i) {
        d.images.push_back(to_tensor(images[i]));
        d.names.push_back(std::to_string(i));
    }
    return d;
}

}  // namespace

PYBIND11_MODULE(_core, m)
{
    m.doc() = "VQ digital semantic image transmission simulator";

    py::register_exception<Error>(m, "VqdiscError", PyExc_RuntimeError);

    py::class_<h::RunConfig>(m, "RunConfig")
        .def(py::init<>())
        .def_static("parse", &h::RunConfig::parse)
        .def_static("load", &h::RunConfig::load)
        .def_static("keys", &h::RunConfig::keys)
        .def("set", &h::RunConfig::set)
        .def("validate", &h::RunConfig::validate)
        .def("to_text", &h::RunConfig::to_text)
        .def("__repr__", &h::RunConfig::to_text);

    // Move-only; held by shared_ptr so pybind11 never needs a copy.
    py::class_<codec::CodecState, std::shared_ptr<codec::CodecState>>(m, "CodecState")
        .def_static("load",
                    [](const std::filesystem::path& p) {
                        return std::make_shared<codec::CodecState>(codec::CodecState::load(p));
                    })
        .def("save", &codec::CodecState::save)
        .def_property_readonly("payload_bits", [](const codec::CodecState& s) { return s.config().payload_bits(); })
        .def_property_readonly("image_shape", [](const codec::CodecState& s) { return s.config().image_shape(); })
        .def(
            "transmit_indices",
            [](const codec::CodecState& s, const Array& img, double snr) {
                return s.transmit_indices(to_tensor(img), snr).indices;
            },
            py::arg("image"), py::arg("snr_db"))
        .def(
            "loopback",
            [](const codec::CodecState& s, const Array& img, double snr, bool noisy, std::uint64_t seed) {
                std::mt19937_64 rng(seed);
                std::optional<phy::ChannelModel> channel;
                if (noisy) channel = phy::AwgnChannel{phy::noise_power_from_snr_db(snr)};
                const auto link = h::transmit_image(s, to_tensor(img), snr, channel, h::CsiMode::ls, rng);
                return py::make_tuple(to_array(link.reconstruction), metrics::ber(link.tx_bits, link.rx_bits));
            },
            py::arg("image"), py::arg("snr_db"), py::arg("noisy") = false, py::arg("seed") = 0,
            "Send an image through the OFDM link; returns (reconstruction, ber).");

    m.def("synthetic_corpus", [](std::size_t count, std::size_t height, std::size_t width, std::uint64_t seed,
                                 bool imbalanced) {
        const auto d = h::synthetic_corpus(count, height, width, seed, imbalanced);
        std::vector<Array> out;
        for (const auto& img : d.images) out.push_back(to_array(img));
        return out;
    }, py::arg("count"), py::arg("height") = 32, py::arg("width") = 32, py::arg("seed") = 1,
       py::arg("imbalanced") = false);

    m.def(
        "train",
        [](const h::RunConfig& cfg, std::optional<std::vector<Array>> images,
           std::optional<std::function<void(std::size_t, double)>> on_epoch) {
            const auto data = images ? dataset_from(*images) : h::dataset_for(cfg);
            h::EpochCallback cb;
            if (on_epoch) cb = [&](const h::EpochLog& e) { (*on_epoch)(e.epoch, e.loss); };
            py::gil_scoped_release release;
            return std::make_shared<codec::CodecState>(h::train(cfg, data, cb).state);
        },
        py::arg("config"), py::arg("images") = py::none(), py::arg("on_epoch") = py::none());

    m.def(
        "sweep",
        [](const codec::CodecState& state, const h::RunConfig& cfg, std::optional<std::vector<Array>> images) {
            const auto data = images ? dataset_from(*images) : h::dataset_for(cfg);
            std::vector<h::SweepRow> rows;
            {
                py::gil_scoped_release release;
                rows = h::sweep_snr(state, data, h::sweep_options(cfg));
            }
            py::list out;
            for (const auto& r : rows) out.append(row_dict(r));
            return out;
        },
        py::arg("state"), py::arg("config"), py::arg("images") = py::none());

    m.def("psnr", [](const Array& a, const Array& b) { return metrics::psnr(to_tensor(a), to_tensor(b)); });
    m.def("ms_ssim", [](const Array& a, const Array& b) { return metrics::ms_ssim(to_tensor(a), to_tensor(b)); });
    m.def("bcr", &metrics::bcr, py::arg("payload_bits"), py::arg("height"), py::arg("width"), py::arg("channels"));
    m.def("ber_theory_qpsk_awgn", &phy::ber_theory_qpsk_awgn, py::arg("ebn0_db"));
    m.def("load_image", [](const std::filesystem::path& p) { return to_array(image::load(p)); });
}
