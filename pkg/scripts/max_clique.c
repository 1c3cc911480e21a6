/* Exact maximum clique, early-stopped at a cap, for the codebook oracle.
 *
 * Branch and bound with a greedy coloring bound on bitset adjacency
 * (Tomita-style MCQ). Input on stdin: "n cap" then n lines, each the
 * adjacency bitmask of vertex i as a hex string (bit j = edge i~j).
 * Output: the size of the largest clique, capped at `cap`.
 *
 *   cc -O2 -o max_clique max_clique.c
 */
#include <stdint.h>
#include <stdio.h>
#include <stdlib.h>
#include <string.h>

#define MAXN 4096
#define MAXW (MAXN / 64)

static int n, cap, nw, best;
static uint64_t adj[MAXN][MAXW];

/* depth-indexed scratch: candidate sets, coloring order and bounds */
static uint64_t cand_buf[64][MAXW];
static int order_buf[64][MAXN];
static int bound_buf[64][MAXN];

static int expand(int size, uint64_t *cand, int depth) {
    if (size > best) {
        best = size;
        if (best >= cap) return 1;
    }
    int *order = order_buf[depth];
    int *bound = bound_buf[depth];
    int cnt = 0;
    uint64_t rest[MAXW];
    memcpy(rest, cand, nw * sizeof(uint64_t));
    for (int color = 1;; color++) {
        uint64_t avail[MAXW];
        memcpy(avail, rest, nw * sizeof(uint64_t));
        int found = 0;
        for (int w = 0; w < nw; w++) {
            while (avail[w]) {
                int v = w * 64 + __builtin_ctzll(avail[w]);
                order[cnt] = v;
                bound[cnt++] = color;
                found = 1;
                rest[v / 64] &= ~(1ULL << (v % 64));
                for (int u = 0; u < nw; u++) avail[u] &= ~adj[v][u];
                avail[v / 64] &= ~(1ULL << (v % 64));
            }
        }
        if (!found) break;
    }
    uint64_t *child = cand_buf[depth];
    uint64_t live[MAXW];
    memcpy(live, cand, nw * sizeof(uint64_t));
    for (int i = cnt - 1; i >= 0; i--) {
        if (size + bound[i] <= best) return 0;
        int v = order[i];
        for (int w = 0; w < nw; w++) child[w] = live[w] & adj[v][w];
        if (expand(size + 1, child, depth + 1)) return 1;
        live[v / 64] &= ~(1ULL << (v % 64));
    }
    return 0;
}

int main(void) {
    if (scanf("%d %d", &n, &cap) != 2 || n < 0 || n > MAXN) return 2;
    nw = (n + 63) / 64;
    char hex[MAXN / 4 + 16];
    for (int i = 0; i < n; i++) {
        if (scanf("%s", hex) != 1) return 2;
        int len = (int)strlen(hex);
        for (int k = 0; k < len; k++) {
            char c = hex[len - 1 - k];
            int v = (c >= 'a') ? c - 'a' + 10 : (c >= 'A') ? c - 'A' + 10 : c - '0';
            for (int b = 0; b < 4; b++)
                if (v & (1 << b)) {
                    int j = 4 * k + b;
                    if (j < n) adj[i][j / 64] |= 1ULL << (j % 64);
                }
        }
    }
    uint64_t all[MAXW];
    memset(all, 0, sizeof(all));
    for (int i = 0; i < n; i++) all[i / 64] |= 1ULL << (i % 64);
    best = 0;
    expand(0, all, 0);
    printf("%d\n", best);
    return 0;
}
