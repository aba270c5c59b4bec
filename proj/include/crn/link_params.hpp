#pragma once

namespace crn::sensing {

inline constexpr double kBoltzmann = 1.380649e-23;  // J/K

/// Link budget for a node's ESM receiver listening to a target emitter. Linear units.
struct EsmLinkParams {
    double target_tx_power = 1.0;  // W
    double target_tx_gain = 1.0;
    double rx_gain = 1.0;
    double wavelength = 0.2998;  // m (1 GHz)
    double losses = 2.0;         // ~3 dB
    double noise_figure = 10.0;  // 10 dB
    double bandwidth = 1e6;      // Hz
    double noise_temp = 290.0;   // K
};

/// An adversary intercept receiver listening to a node's radar. Linear units.
struct RadarInterceptParams {
    double transmit_power = 1000.0;  // W
    double transmit_gain = 1.0;
    double intercept_gain = 1.0;
    double one_way_loss = 1.0;
    double system_loss = 1.0;
    double wavelength = 0.3;     // m
    double noise_figure = 10.0;  // 10 dB
    double bandwidth = 1e6;      // Hz
    double required_snr = 1.0;   // 0 dB
    double noise_temp = 290.0;   // K
};

}  // namespace crn::sensing
