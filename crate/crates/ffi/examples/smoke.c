/* Minimal C consumer: create a session, query costs and savings, run a
 * simulated collective, and clean up.
 *
 * Build (after `cargo build -p paro-ffi`, from the workspace root):
 *   cc crates/ffi/examples/smoke.c -Icrates/ffi/include \
 *      target/debug/libparo_ffi.a -lm -o smoke
 */
#include <stdio.h>
#include <string.h>

#include "paro.h"

static int fail(const char *what) {
    const char *msg = paro_last_error_message();
    fprintf(stderr, "%s failed: %s\n", what, msg ? msg : "(no message)");
    return 1;
}

int main(void) {
    ParoSession *session = paro_session_new(64, 8, 8, 7000000000ULL, 0, 8, false);
    if (!session) {
        return fail("paro_session_new");
    }

    uint64_t savings = 0;
    if (paro_accumulation_savings(session, &savings) != PARO_STATUS_OK) {
        return fail("paro_accumulation_savings");
    }
    printf("savings_params=%llu\n", (unsigned long long)savings);

    char *json = NULL;
    if (paro_cost_json(session, "paro-iig", &json) != PARO_STATUS_OK) {
        return fail("paro_cost_json");
    }
    printf("cost_has_method=%d\n", strstr(json, "\"PaRO-IIG\"") != NULL);
    paro_string_free(json);

    if (paro_simulate_json(NULL, "ho-ring", "all-gather", 9, 3, 9216, 7, &json) != PARO_STATUS_OK) {
        return fail("paro_simulate_json");
    }
    printf("simulate_ok=%d\n", strstr(json, "\"oracle_ok\":true") != NULL);
    paro_string_free(json);

    paro_session_free(session);
    printf("done\n");
    return 0;
}
