#include <math.h>
#include <stdio.h>
#include <string.h>

#include "doubletopt.h"

#define CHECK(cond)                                                        \
    do {                                                                   \
        if (!(cond)) {                                                     \
            fprintf(stderr, "%s:%d: %s (%s)\n", __FILE__, __LINE__, #cond, \
                    dt_last_error_message());                              \
            return 1;                                                      \
        }                                                                  \
    } while (0)

int main(int argc, char **argv) {
    if (argc != 4) {
        fprintf(stderr, "usage: smoke GEOMETRY FIELD OUT_DIR\n");
        return 2;
    }
    double q = 0.0;
    CHECK(dt_drawdown_limit(2e-3, 10.0, &q) == DT_STATUS_OK);
    CHECK(fabs(q - 0.039) < 1e-12);
    CHECK(dt_drawdown_limit(-1.0, 10.0, &q) == DT_STATUS_INVALID_ARGUMENT);
    CHECK(strlen(dt_last_error_message()) > 0);

    DtField *field = NULL;
    DtGeometry *geometry = NULL;
    CHECK(dt_field_read(argv[2], &field) == DT_STATUS_OK);
    CHECK(dt_geometry_read(argv[1], &geometry) == DT_STATUS_OK);

    DtScenario scenarios[2] = {{1.0, 1.5, 10.0}, {5.0, 3.0, 10.0}};
    DtOptions options;
    CHECK(dt_options_default(&options) == DT_STATUS_OK);
    options.workers = 1;
    DtRun *run = NULL;
    CHECK(dt_run(geometry, field, scenarios, 2, &options, &run) == DT_STATUS_OK);
    CHECK(dt_run_scenario_count(run) == 2);

    DtReport report;
    CHECK(dt_run_report(run, 0, &report) == DT_STATUS_OK);
    CHECK(report.blocks_with + report.blocks_without + report.blocks_failed ==
          dt_run_block_count(run));
    double total = 0.0;
    for (size_t b = 0; b < dt_run_block_count(run); b++) {
        DtBlockResult r;
        CHECK(dt_run_block(run, 0, b, &r) == DT_STATUS_OK);
        CHECK(strlen(r.block_id) > 0);
        total += r.q_block_l_s;
    }
    CHECK(fabs(total - report.total_rate_l_s) <= 1e-9 * (1.0 + total));
    CHECK(dt_run_report(run, 2, &report) == DT_STATUS_OUT_OF_RANGE);
    CHECK(dt_run_write(run, argv[3], false) == DT_STATUS_OK);

    printf("%s %zu blocks %.3f l/s\n", dt_version(), dt_run_block_count(run), total);
    dt_run_free(run);
    dt_geometry_free(geometry);
    dt_field_free(field);
    return 0;
}
