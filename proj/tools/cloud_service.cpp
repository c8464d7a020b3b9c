// cloud-service: reading ingestion, alerting and console fan-out.

#include <CLI11.hpp>

#include <csignal>
#include <cstdio>
#include <cstdlib>

#include "thermoscreen/cloud/server.hpp"

using namespace thermoscreen;

int main(int argc, char** argv)
{
    CLI::App app{"Cloud service: HTTP reading ingest, durable log, fever alerts over WebSocket"};
    cloud::ServerConfig server;
    cloud::StoreConfig store;
    std::string data_dir;
    bool no_fsync = false;
    app.add_option("--port", server.port, "Listen port (0 picks a free one)")->capture_default_str();
    app.add_option("--address", server.address, "Listen address")->capture_default_str();
    app.add_option("--fever-threshold-c", store.alerts.fever_threshold_c, "FEVER when temperature >= this")
        ->capture_default_str();
    app.add_flag("--mask-alerts", store.alerts.mask_alerts, "Raise NO_MASK alerts for unmasked readings");
    app.add_option("--data-dir", data_dir, "Directory for the reading log")->envname("THERMO_DATA_DIR");
    app.add_option("--threads", server.threads, "I/O threads")->capture_default_str();
    app.add_flag("--no-fsync", no_fsync, "Skip fdatasync after each append (faster, not crash-safe)");
    CLI11_PARSE(app, argc, argv);

    if (data_dir.empty()) data_dir = "thermo-data";
    store.data_dir = data_dir;
    store.fsync = !no_fsync;

    sigset_t signals;
    sigemptyset(&signals);
    sigaddset(&signals, SIGINT);
    sigaddset(&signals, SIGTERM);
    pthread_sigmask(SIG_BLOCK, &signals, nullptr);

    try {
        cloud::CloudServer srv(server, store);
        auto& st = srv.service().store();
        srv.start();
        std::printf("listening on %s data=%s readings=%llu alerts=%llu unacked=%llu threshold=%.2f mask_alerts=%s\n",
                    srv.url().c_str(), data_dir.c_str(), static_cast<unsigned long long>(st.reading_count()),
                    static_cast<unsigned long long>(st.alert_count()),
                    static_cast<unsigned long long>(st.unacked_count()), store.alerts.fever_threshold_c,
                    store.alerts.mask_alerts ? "on" : "off");
        std::fflush(stdout);
        int sig = 0;
        sigwait(&signals, &sig);
        srv.stop();
        std::printf("stopped readings=%llu alerts=%llu\n", static_cast<unsigned long long>(st.reading_count()),
                    static_cast<unsigned long long>(st.alert_count()));
    } catch (const std::exception& e) {
        std::fprintf(stderr, "%s\n", e.what());
        return 1;
    }
    return 0;
}
