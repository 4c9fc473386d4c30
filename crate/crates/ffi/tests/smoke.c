#include <math.h>
#include <stdio.h>
#include "apkinetic.h"

#define CHECK(call)                                                          \
    do {                                                                     \
        ApkStatus s_ = (call);                                               \
        if (s_ != APK_STATUS_OK) {                                           \
            fprintf(stderr, "%s -> %d: %s\n", #call, (int)s_,                \
                    apk_last_error_message());                               \
            return 1;                                                        \
        }                                                                    \
    } while (0)

int main(void) {
    ApkPair *pair = NULL;
    ApkGridFunction *f0 = NULL, *f1 = NULL;
    ApkStepper *stepper = NULL;
    double m0[4], m1[4];

    CHECK(apk_pair_resolve("IMEX-EULER(1,1,1)", &pair));
    CHECK(apk_grid_function_bkw(32, 9.42477796076938, 0.0, 1.0, &f0));
    CHECK(apk_stepper_new(pair, 0.1, 1.0, APK_BACKEND_BGK, 1.0, 0, 0.0, &stepper));
    CHECK(apk_stepper_step(stepper, f0, &f1));
    CHECK(apk_grid_function_moments(f0, m0));
    CHECK(apk_grid_function_moments(f1, m1));
    if (fabs(m0[0] - m1[0]) > 1e-12 || apk_pair_resolve("nope", &pair) != APK_STATUS_UNKNOWN_SCHEME) {
        return 2;
    }
    printf("ok %s rho=%.6f\n", apk_version(), m1[0]);
    apk_grid_function_free(f1);
    apk_grid_function_free(f0);
    apk_stepper_free(stepper);
    apk_pair_free(pair);
    return 0;
}
