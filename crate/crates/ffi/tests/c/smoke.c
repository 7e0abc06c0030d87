#include <math.h>
#include <stdio.h>
#include "blgeo.h"

int main(void) {
    const char *lw =
        "{\"n\": 2, \"maps\": [[[1, 0]], [[0, 1]]],"
        " \"p\": [{\"num\": 1, \"den\": 1}, {\"num\": 1, \"den\": 1}]}";
    BlgeoDatum *d = NULL;
    if (blgeo_datum_from_json(lw, &d) != BLGEO_STATUS_OK) {
        fprintf(stderr, "parse: %s\n", blgeo_last_error());
        return 1;
    }
    BlgeoResult *r = NULL;
    BlgeoStatus s = blgeo_solve(d, BLGEO_METHOD_GEODESIC, 0.0, 0, &r);
    if (s != BLGEO_STATUS_OK) {
        fprintf(stderr, "solve: %s\n", blgeo_last_error());
        return 2;
    }
    double v = blgeo_result_log_bl(r);
    printf("%.17g\n", v);
    blgeo_result_free(r);
    blgeo_datum_free(d);
    return fabs(v) < 1e-8 ? 0 : 3;
}
