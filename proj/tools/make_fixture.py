#!/usr/bin/env python3
"""Writes the 100-user search-log fixture used by the ingestion tests."""
import datetime
import random
import sys

HEADER = ["search_id", "user_id", "query_id", "query_category_id", "ad_id", "ad_category_id",
          "ad_brand_id", "ad_shop_id", "price", "position", "is_click", "timestamp"]


def main(path, users=100, seed=20150428):
    rng = random.Random(seed)
    rows = []
    search = 100000
    for u in range(1, users + 1):
        t = 1430179200 + rng.randrange(0, 20 * 86400)  # 2015-04-28 onward
        for _ in range(rng.randint(1, 6)):
            search += 1
            cat = rng.choice([11, 12, 13, 14])
            query = cat * 100 + rng.randrange(5)
            t += rng.randrange(30, 2 * 86400)
            stamp = "%d" % t if rng.random() < 0.3 else None
            for pos in range(1, rng.randint(1, 5) + 1):
                ad = cat * 1000 + rng.randrange(40)
                brand = "" if rng.random() < 0.2 else str(ad % 7 + cat * 10)
                shop = "" if rng.random() < 0.2 else str(ad % 11)
                price = "%.2f" % (rng.lognormvariate(3, 0.7))
                click = 1 if rng.random() < 0.25 else 0
                ts = stamp or datetime.datetime.fromtimestamp(t, datetime.timezone.utc).strftime("%Y-%m-%d %H:%M:%S")
                rows.append([str(search), "u%d" % u, str(query), str(cat), str(ad), str(cat),
                             brand, shop, price, str(pos), str(click), ts])
    # a few malformed rows inside otherwise valid pages
    for i, bad in enumerate([("price", "abc"), ("is_click", "2"), ("timestamp", "yesterday")]):
        row = list(rows[10 + 40 * i])
        row[HEADER.index(bad[0])] = bad[1]
        row[HEADER.index("position")] = "9"
        rows.insert(11 + 40 * i, row)
    rows.insert(200, rows[199][:5])  # truncated line
    with open(path, "w") as f:
        f.write("\t".join(HEADER) + "\n")
        for r in rows:
            f.write("\t".join(r) + "\n")


if __name__ == "__main__":
    main(sys.argv[1] if len(sys.argv) > 1 else "tests/data/search_log_fixture.tsv")
