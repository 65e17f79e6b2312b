#!/usr/bin/env python3
"""Generate the bundled demo fixture under data/demo/.

Every record is assembled from known parts (host, keywords, occupation, language,
faces), so the expected per-group raw/passed counts written to expected/ follow
from the construction itself rather than from re-running the C++ pipeline.
Rerunning with the same seed rewrites identical bytes.
"""

import argparse
import csv
import hashlib
import json
import math
import random
import re
import shutil
import struct
from collections import defaultdict
from fractions import Fraction
from pathlib import Path

ROOT = Path(__file__).resolve().parent.parent
DATA = ROOT / "data"

SHARDS = 4
PER_SHARD = 2500
TOP_FRAC = Fraction(3, 10)
FETCHED_AT = "2026-10-01T00:00:00Z"

# host -> (registered domain, ccTLD or None); authored by hand
HOSTS = {
    "www.shutterstock.com": ("shutterstock.com", None),
    "image.shutterstock.com": ("shutterstock.com", None),
    "i.pinimg.com": ("pinimg.com", None),
    "foo.blogspot.com": ("blogspot.com", None),
    "cdn.example.co.uk": ("example.co.uk", "uk"),
    "ichef.bbc.co.uk": ("bbc.co.uk", "uk"),
    "static.nytimes.com": ("nytimes.com", None),
    "www.washingtonpost.com": ("washingtonpost.com", None),
    "www.spiegel.de": ("spiegel.de", "de"),
    "img.shop.de": ("shop.de", "de"),
    "img.rakuten.co.jp": ("rakuten.co.jp", "jp"),
    "media.loja.com.br": ("loja.com.br", "br"),
    "folha.uol.com.br": ("uol.com.br", "br"),
    "photos.bazaar.in": ("bazaar.in", "in"),
    "timesofindia.indiatimes.com": ("indiatimes.com", None),
    "cdn.boutique.fr": ("boutique.fr", "fr"),
    "static.blog.it": ("blog.it", "it"),
    "pics.market.com.ng": ("market.com.ng", "ng"),
    "assets.store.cn": ("store.cn", "cn"),
    "img.site.ru": ("site.ru", "ru"),
    "cdn.tienda.mx": ("tienda.mx", "mx"),
    "203.0.113.7": ("203.0.113.7", None),
}

# host weight in the URL pool
HOST_WEIGHT = {h: 1.0 for h in HOSTS}
HOST_WEIGHT.update({"www.shutterstock.com": 4.0, "i.pinimg.com": 3.0, "static.nytimes.com": 1.5})

# news sites reached by host or registered domain
NEWS = {
    "nytimes.com": ("The New York Times", "US"),
    "washingtonpost.com": ("The Washington Post", "US"),
    "bbc.co.uk": ("BBC", "GB"),
    "spiegel.de": ("Der Spiegel", "DE"),
    "folha.uol.com.br": ("Folha de S.Paulo", "BR"),
    "timesofindia.indiatimes.com": ("The Times of India", "IN"),
}

# registered domain -> raw service category names ([] = uncategorized)
DOMAIN_CATEGORIES = {
    "shutterstock.com": ["Photography", "Stock Photos"],
    "pinimg.com": ["Social Networks"],
    "blogspot.com": ["Blogs"],
    "example.co.uk": [],
    "bbc.co.uk": ["News & Media"],
    "nytimes.com": ["News & Media"],
    "washingtonpost.com": ["News & Media"],
    "spiegel.de": ["News & Media", "Magazines"],
    "shop.de": ["Shopping", "Gardening"],
    "rakuten.co.jp": ["Shopping", "Auctions"],
    "loja.com.br": ["Ecommerce"],
    "uol.com.br": ["News & Media"],
    "bazaar.in": ["Shopping"],
    "indiatimes.com": ["News & Media"],
    "boutique.fr": ["Fashion", "Fine Art"],
    "blog.it": ["Pornography", "Nudity"],
    "market.com.ng": [],
    "store.cn": ["Ecommerce", "Radio"],
    "site.ru": [],
    "tienda.mx": ["Shopping"],
    "203.0.113.7": [],
}

# host -> country codes of its resolved addresses; [] = does not resolve
HOST_IP_COUNTRIES = {
    "www.shutterstock.com": ["US", "US"],
    "image.shutterstock.com": ["US"],
    "i.pinimg.com": ["US", "IE"],
    "foo.blogspot.com": ["US"],
    "cdn.example.co.uk": ["GB"],
    "ichef.bbc.co.uk": ["GB", "GB"],
    "static.nytimes.com": ["US"],
    "www.washingtonpost.com": ["US"],
    "www.spiegel.de": ["DE"],
    "img.shop.de": ["NL"],
    "img.rakuten.co.jp": ["JP"],
    "media.loja.com.br": ["BR"],
    "folha.uol.com.br": ["BR", "US"],
    "photos.bazaar.in": ["IN"],
    "timesofindia.indiatimes.com": ["IN"],
    "cdn.boutique.fr": ["FR"],
    "static.blog.it": ["-"],
    "pics.market.com.ng": ["NG"],
    "assets.store.cn": ["CN", "HK"],
    "img.site.ru": [],
    "cdn.tienda.mx": ["MX"],
}
LITERAL_IP_COUNTRY = {"203.0.113.7": "AU"}

COUNTRIES = ["AU", "BR", "CN", "DE", "FR", "GB", "HK", "IE", "IN", "JP", "MX", "NG", "NL", "US", "-"]

# label -> (dimension, surface forms); labels match data/identity_keywords.json
IDENTITY = {
    "wom[ae]n": ("gender", ["woman", "women", "Woman", "WOMEN"]),
    "m[ae]n": ("gender", ["man", "men", "Men"]),
    "females?": ("gender", ["female", "females"]),
    "males?": ("gender", ["male", "Males"]),
    "non[-]?binary": ("gender", ["nonbinary", "non-binary"]),
    "trans(|\\+|gender)": ("gender", ["trans", "transgender"]),
    "asian([ -]american)?s?": ("race", ["asian", "Asians", "asian-american", "Asian American"]),
    "african[ -]americans?": ("race", ["african american", "African-Americans"]),
    "caucasians?": ("race", ["caucasian", "caucasians"]),
    "european([ -]american)?s?": ("race", ["european", "europeans"]),
    "latin[oax]s?": ("race", ["latina", "latino", "latinx", "latinos"]),
    "blacks?": ("race", ["black"]),
    "whites?": ("race", ["white", "whites"]),
    "christians?": ("religion", ["christian", "christians"]),
    "jew(|s|ish)?": ("religion", ["jew", "jews", "jewish"]),
    "muslims?": ("religion", ["muslim", "Muslims"]),
    "gays?": ("sexuality", ["gay", "gays"]),
    "lesbians?": ("sexuality", ["lesbian"]),
    "bi-?sexuals?": ("sexuality", ["bisexual", "bi-sexual"]),
    "homosexuals?": ("sexuality", ["homosexual"]),
    "heterosexuals?": ("sexuality", ["heterosexual"]),
    "straights?": ("sexuality", ["straight"]),
}
# Per-label draw weight and score shift.
IDENTITY_WEIGHT = {
    "wom[ae]n": 10, "m[ae]n": 9, "females?": 2, "males?": 2, "non[-]?binary": 1, "trans(|\\+|gender)": 1,
    "asian([ -]american)?s?": 4, "african[ -]americans?": 2, "caucasians?": 1, "european([ -]american)?s?": 2,
    "latin[oax]s?": 2, "blacks?": 2, "whites?": 2, "christians?": 2, "jew(|s|ish)?": 1, "muslims?": 2,
    "gays?": 1, "lesbians?": 1, "bi-?sexuals?": 1, "homosexuals?": 1, "heterosexuals?": 1, "straights?": 1,
}
IDENTITY_SHIFT = {"wom[ae]n": -0.03, "females?": -0.02, "m[ae]n": 0.01, "latin[oax]s?": -0.04,
                  "african[ -]americans?": -0.03, "muslims?": -0.02, "non[-]?binary": -0.05}

# Near misses: none of these may hit any pattern.
DECOYS = ["humane", "womanly", "manager", "german", "feminine", "transit", "jewel", "blackboard",
          "whitewash", "asiana", "straightforward", "mankind", "nursery", "chefs", "therapist"]

FILLER = ["portrait", "studio", "photo", "smiling", "outdoor", "sunset", "city", "street", "coffee", "office",
          "family", "holiday", "garden", "vintage", "modern", "background", "texture", "isolated", "happy",
          "young", "group", "beach", "winter", "summer", "kitchen", "laptop", "flowers", "wedding", "party",
          "queen", "king", "dress", "suit", "beard", "makeup", "football", "fashion", "business", "the", "a",
          "with", "in", "and", "of"]

OCCUPATIONS = [
    ("nurse", 81220, 46), ("software engineer", 132270, 71), ("chef", 60990, 41), ("teacher", 65220, 64),
    ("lawyer", 163770, 75), ("cashier", 30230, 29), ("pilot", 219140, 70), ("farmer", 87980, 40),
]

LANGUAGES = [("en", 55), ("de", 8), ("fr", 7), ("es", 7), ("ja", 5), ("pt", 5), ("hi", 3), ("zh", 3),
             ("ru", 2), ("it", 2), ("yo", 1)]
LANGUAGE_SHIFT = {"en": 0.02, "hi": -0.04, "yo": -0.06, "zh": -0.02}

GENDERS = ["Female", "Male"]
RACES = ["Asian", "Black", "Latino", "White"]
FACE_DIMS = 16
EMB_DIMS = 16
REF_PER_CLUSTER = 12


def weighted(rng, pairs):
    total = sum(w for _, w in pairs)
    x = rng.random() * total
    for item, w in pairs:
        x -= w
        if x < 0:
            return item
    return pairs[-1][0]


def save_paem(path, rows, id_map=None):
    dims = len(rows[0]) if rows else 0
    with open(path, "wb") as f:
        f.write(b"PAEM")
        f.write(struct.pack("<II", len(rows), dims))
        for r in rows:
            f.write(struct.pack("<%df" % dims, *r))
        if id_map:
            f.write(struct.pack("<I", len(id_map)))
            for k in sorted(id_map):
                b = k.encode()
                f.write(struct.pack("<I", len(b)))
                f.write(b)
                f.write(struct.pack("<I", id_map[k]))


def f32(x):
    return struct.unpack("<f", struct.pack("<f", x))[0]


def ip_to_int(s):
    a, b, c, d = (int(p) for p in s.split("."))
    return (a << 24) | (b << 16) | (c << 8) | d


def int_to_ip(v):
    return ".".join(str((v >> s) & 255) for s in (24, 16, 8, 0))


def age_bucket(low, high):
    mid = (low + high) // 2
    lo = mid // 10 * 10
    return "%d-%d" % (lo, lo + 9)


class Store:
    def __init__(self, root):
        self.root = root
        self.count = 0

    def put(self, service, key, body):
        digest = hashlib.sha256((service + "\n" + key).encode()).hexdigest()
        d = self.root / service
        d.mkdir(parents=True, exist_ok=True)
        if (d / (digest + ".bin")).exists():
            return
        (d / (digest + ".bin")).write_bytes(body.encode())
        meta = {"fetched_at": FETCHED_AT, "key": key, "service": service, "status": 200}
        (d / (digest + ".meta.json")).write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
        self.count += 1


def load_category_map():
    out = {}
    with open(DATA / "category_map.csv", newline="") as f:
        for row in csv.DictReader(f):
            out[row["raw_name"]] = row["merged_name"]
    return out


def load_regions():
    out = {}
    with open(DATA / "regions.csv", newline="") as f:
        for row in csv.DictReader(f):
            out[row["country_code"]] = row["western"] == "1"
    return out


def build(out, seed):
    rng = random.Random(seed)
    cat_map = load_category_map()
    regions = load_regions()
    if out.exists():
        shutil.rmtree(out)
    (out / "shards").mkdir(parents=True)
    (out / "expected").mkdir()
    store = Store(out / "fixtures")

    # IP ranges: one /16 per country, starting at 10.0.0.0, with gaps between them
    ip_rows = []
    base = ip_to_int("10.0.0.0")
    country_block = {}
    for i, cc in enumerate(COUNTRIES):
        lo = base + i * 2 * 65536
        country_block[cc] = lo
        ip_rows.append((lo, lo + 65535, cc))
    lit = ip_to_int("203.0.113.0")
    ip_rows.append((lit, lit + 255, LITERAL_IP_COUNTRY["203.0.113.7"]))
    with open(out / "ip_db.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        for lo, hi, cc in ip_rows:
            w.writerow([lo, hi, cc, "-" if cc == "-" else "Country " + cc])
        # IPv6 rows are skipped by the loader
        w.writerow([str(2 ** 64), str(2 ** 64 + 100), "US", "United States"])

    host_country = {}
    for host, ccs in sorted(HOST_IP_COUNTRIES.items()):
        ips = [country_block[cc] + rng.randrange(1, 60000) for cc in ccs]
        body = json.dumps({"host": host, "ipv4": sorted(int_to_ip(v) for v in ips)}, sort_keys=True)
        store.put("dns", host, body)
        host_country[host] = None if not ips else [cc for v, cc in sorted(zip(ips, ccs))][0]
    for host, cc in LITERAL_IP_COUNTRY.items():
        host_country[host] = cc

    for dom, names in sorted(DOMAIN_CATEGORIES.items()):
        cats = [{"id": 100 + i, "name": n} for i, n in enumerate(names)]
        body = {"success": True, "errors": [], "messages": [],
                "result": {"domain": dom, "content_categories": cats}}
        store.put("cloudflare", dom, json.dumps(body, sort_keys=True))

    # URL pool shared by records; wayback answers are per URL
    host_pairs = sorted(HOST_WEIGHT.items())
    urls = []
    for i in range(360):
        host = weighted(rng, host_pairs)
        scheme = "http" if host[0].isdigit() else "https"
        urls.append("%s://%s/img/%04d/%s.jpg" % (scheme, host, i, rng.choice(["a", "b", "c"])))
    url_year = {}
    for u in urls:
        if rng.random() < 0.45:
            year = rng.choice(range(2009, 2024))
            ts = "%04d%02d%02d%02d%02d%02d" % (year, rng.randrange(1, 13), rng.randrange(1, 29), rng.randrange(24),
                                                rng.randrange(60), rng.randrange(60))
            body = {"url": u, "archived_snapshots": {"closest": {
                "status": "200", "available": True, "url": "http://web.archive.org/web/%s/%s" % (ts, u),
                "timestamp": ts}}}
            url_year[u] = year
        else:
            body = {"url": u, "archived_snapshots": {}}
            url_year[u] = None
        store.put("wayback", u, json.dumps(body, sort_keys=True))
    url_year_shift = {y: (y - 2016) * 0.004 for y in range(2009, 2024)}

    # reference faces: one cluster per (gender, race)
    centers = {}
    for g in GENDERS:
        for r in RACES:
            centers[(g, r)] = [rng.gauss(0, 3) for _ in range(FACE_DIMS)]
    ref_rows = []
    ref_entries = []
    for (g, r), c in sorted(centers.items()):
        for j in range(REF_PER_CLUSTER):
            pid = "ref-%s-%s-%02d" % (g[0], r[:2].lower(), j)
            ref_entries.append((pid, len(ref_rows), g, r))
            ref_rows.append([f32(x + rng.gauss(0, 0.4)) for x in c])
    save_paem(out / "reference.paem", ref_rows)
    with open(out / "reference.paem.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["person_id", "row", "gender", "race"])
        for e in ref_entries:
            w.writerow(e)

    with open(out / "occupations.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["title", "salary", "prestige"])
        for t, s, p in OCCUPATIONS:
            w.writerow([t, s, p])

    face_rows = []
    emb_rows = []
    records = []
    ident_pairs = sorted(IDENTITY_WEIGHT.items())
    for n in range(SHARDS * PER_SHARD):
        uid = "demo-%05d" % n
        url = rng.choice(urls)
        host = url.split("/")[2]
        words = [rng.choice(FILLER) for _ in range(rng.randrange(2, 6))]
        idents = set()
        for _ in range(rng.choice([0, 0, 1, 1, 1, 2])):
            label = weighted(rng, ident_pairs)
            idents.add(label)
            words.append(rng.choice(IDENTITY[label][1]))
        occupation = None
        if rng.random() < 0.25:
            occupation = rng.choice(OCCUPATIONS)[0]
            words.append(occupation)
        if rng.random() < 0.15:
            words.append(rng.choice(DECOYS))
        pronoun = None
        if rng.random() < 0.1:
            pronoun = rng.choice(["she", "her", "he", "his"])
            words.append(pronoun)
        rng.shuffle(words)
        text = " ".join(words)
        lang = None if rng.random() < 0.05 else weighted(rng, LANGUAGES)
        if lang == "en" and rng.random() < 0.1:
            lang = "EN"

        shift = sum(IDENTITY_SHIFT.get(l, 0.0) for l in idents)
        shift += LANGUAGE_SHIFT.get((lang or "").lower(), 0.0)
        if url_year[url] is not None:
            shift += url_year_shift[url_year[url]]
        if occupation:
            salary = dict((t, s) for t, s, _ in OCCUPATIONS)[occupation]
            shift += (salary - 100000) / 4_000_000
        score_target = min(0.95, max(-0.5, rng.uniform(0.12, 0.42) + shift))

        rec = {"uid": uid, "url": url, "text": text}
        if n % 20 == 7:
            # scored from embeddings: pick a text vector at the target angle to the image vector
            img = [rng.gauss(0, 1) for _ in range(EMB_DIMS)]
            ortho = [rng.gauss(0, 1) for _ in range(EMB_DIMS)]
            ni = math.sqrt(sum(x * x for x in img))
            img = [x / ni for x in img]
            d = sum(a * b for a, b in zip(ortho, img))
            ortho = [a - d * b for a, b in zip(ortho, img)]
            no = math.sqrt(sum(x * x for x in ortho))
            ortho = [x / no for x in ortho]
            c = score_target
            s = math.sqrt(1 - c * c)
            txt = [c * a + s * b for a, b in zip(img, ortho)]
            img32 = [f32(x) for x in img]
            txt32 = [f32(x) for x in txt]
            rec["embedding_image"] = len(emb_rows)
            emb_rows.append(img32)
            rec["embedding_text"] = len(emb_rows)
            emb_rows.append(txt32)
            dot = sum(a * b for a, b in zip(img32, txt32))
            nu = math.sqrt(sum(a * a for a in img32))
            nv = math.sqrt(sum(b * b for b in txt32))
            score = max(-1.0, min(1.0, dot / (nu * nv)))
        else:
            score = round(score_target, 6)
            rec["clip_score"] = score
        if lang is not None:
            rec["language"] = lang

        faces = None
        if rng.random() < 0.1:
            nbox = 1 if rng.random() < 0.8 else 2
            boxes = []
            cluster = rng.choice(sorted(centers))
            for b in range(nbox):
                box = {"x": round(rng.uniform(0, 0.5), 3), "y": round(rng.uniform(0, 0.5), 3),
                       "w": round(rng.uniform(0.1, 0.4), 3), "h": round(rng.uniform(0.1, 0.4), 3)}
                if b == 0 or rng.random() < 0.5:
                    spread = 0.5 if rng.random() < 0.8 else 2.5
                    box["embedding"] = len(face_rows)
                    face_rows.append([f32(x + rng.gauss(0, spread)) for x in centers[cluster]])
                boxes.append(box)
            rec["face_boxes"] = boxes
            detected = []
            ndet = nbox if rng.random() < 0.9 else 0
            for b in range(ndet):
                gender = cluster[0] if rng.random() < 0.9 else GENDERS[1 - GENDERS.index(cluster[0])]
                low = rng.randrange(5, 60)
                high = low + rng.randrange(2, 12)
                detected.append({"BoundingBox": {"Left": boxes[b]["x"], "Top": boxes[b]["y"],
                                                 "Width": boxes[b]["w"], "Height": boxes[b]["h"]},
                                 "AgeRange": {"Low": low, "High": high},
                                 "Gender": {"Value": gender, "Confidence": 99.0}})
            store.put("rekognition", uid, json.dumps({"FaceDetails": detected}, sort_keys=True))
            faces = {"boxes": boxes, "detected": detected}

        records.append({"rec": rec, "score": score, "idents": idents, "occupation": occupation,
                        "pronoun": pronoun, "lang": lang, "host": host, "faces": faces})

    save_paem(out / "embeddings.paem", emb_rows)
    save_paem(out / "faces.paem", face_rows)

    # shards, with a few malformed lines that the pipeline skips
    bad_lines = [
        '{"uid":"bad-1","url":"not a url","text":"t"}',
        '{"uid":"bad-2","url":"https://y.org/p.png","text":"","clip_score":1.5}',
        '{"uid":"bad-3","url":"https://y.org/p.png"',
    ]
    for s in range(SHARDS):
        with open(out / "shards" / ("part-%04d.jsonl" % s), "w") as f:
            for i, r in enumerate(records[s * PER_SHARD:(s + 1) * PER_SHARD]):
                f.write(json.dumps(r["rec"], separators=(",", ":")) + "\n")
                if i == 100 * (s + 1) and s < len(bad_lines):
                    f.write(bad_lines[s] + "\n")

    # threshold: the ceil(f*N)-th largest score, ties included
    scores = sorted((r["score"] for r in records), reverse=True)
    keep = math.ceil(TOP_FRAC * len(scores))
    threshold = scores[keep - 1]
    for r in records:
        r["passed"] = r["score"] >= threshold

    # sanity: authored hits agree with a reference regex engine using explicit boundaries
    for r in records:
        lowered = r["rec"]["text"].lower()
        found = {l for l in IDENTITY if re.search(r"(?<![a-z0-9_])(?:%s)(?![a-z0-9_])" % l, lowered)}
        assert found == r["idents"], (r["rec"]["text"], found, r["idents"])

    write_expected(out, records, threshold, cat_map, regions, host_country, url_year, centers,
                   ref_rows, ref_entries, face_rows)
    write_config(out)
    return store.count, threshold


def write_counts(path, counts):
    with open(path, "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["dimension", "label", "raw", "passed"])
        for (dim, label), (raw, passed) in sorted(counts.items()):
            w.writerow([dim, label, raw, passed])


def knn_vote(query, ref_rows, ref_entries, k, attr):
    dists = []
    for (pid, row, g, r) in ref_entries:
        d = math.sqrt(sum((a - b) ** 2 for a, b in zip(query, ref_rows[row])))
        dists.append((d, pid, g if attr == "gender" else r))
    dists.sort()
    top = dists[:k]
    votes = defaultdict(int)
    first = {}
    for i, (_, _, lab) in enumerate(top):
        votes[lab] += 1
        first.setdefault(lab, i)
    best = max(votes.values())
    label = min((first[l], l) for l, v in votes.items() if v == best)[1]
    return label, len(votes) == 1


def write_expected(out, records, threshold, cat_map, regions, host_country, url_year, centers,
                   ref_rows, ref_entries, face_rows):
    tables = defaultdict(lambda: defaultdict(lambda: [0, 0]))

    def add(table, dim, label, passed):
        c = tables[table][(dim, label)]
        c[0] += 1
        c[1] += 1 if passed else 0

    dims_of = {l: IDENTITY[l][0] for l in IDENTITY}
    # black/white are matched but left out of reports
    excluded = {"blacks?", "whites?"}
    # every cell of gender x race and religion x race, including empty ones
    inter = {}
    races = [l for l in IDENTITY if dims_of[l] == "race" and l not in excluded]
    for a in IDENTITY:
        if dims_of[a] in ("gender", "religion") and a not in excluded:
            for b in races:
                inter[(a, b)] = [0, 0]
            inter[(a, "total")] = [0, 0]
    for b in races:
        inter[("total", b)] = [0, 0]
    for r in records:
        p = r["passed"]
        host = r["host"]
        registered, cctld = HOSTS[host]
        for l in r["idents"]:
            if l not in excluded:
                add("identity_keywords", dims_of[l], l, p)
        if r["lang"]:
            add("languages", "language", r["lang"].lower(), p)
        if r["occupation"]:
            add("occupations", "occupation", r["occupation"], p)
        if cctld:
            add("cctld", "cctld", cctld.upper(), p)
            if cctld.upper() in regions:
                add("cctld", "region", "western" if regions[cctld.upper()] else "non_western", p)
        add("websites", "website", registered, p)
        site = NEWS.get(host) or NEWS.get(registered)
        if site:
            add("news_sites", site[1], site[0], p)
        for merged in sorted({cat_map.get(n, n) for n in DOMAIN_CATEGORIES[registered]}):
            add("categories", "category", merged, p)
        cc = host_country.get(host)
        if cc and cc != "-":
            add("ip_country", "ip_country", cc, p)
            if cc in regions:
                add("ip_country", "region", "western" if regions[cc] else "non_western", p)
        year = url_year[r["rec"]["url"]]
        if year is not None:
            add("years", "year", str(year), p)
        faces = r["faces"]
        if faces:
            if len(faces["detected"]) == 1:
                d = faces["detected"][0]
                bucket = age_bucket(d["AgeRange"]["Low"], d["AgeRange"]["High"])
                g = d["Gender"]["Value"]
                add("face_gender_age", "gender", g, p)
                add("face_gender_age", "age", bucket, p)
                add("face_gender_age", "gender_age", g + " " + bucket, p)
            boxes = faces["boxes"]
            if len(boxes) == 1 and "embedding" in boxes[0]:
                q = face_rows[boxes[0]["embedding"]]
                g, gu = knn_vote(q, ref_rows, ref_entries, 7, "gender")
                rc, ru = knn_vote(q, ref_rows, ref_entries, 5, "race")
                if gu:
                    add("face_knn_race", "knn_gender", g, p)
                if ru:
                    add("face_knn_race", "knn_race", rc, p)
                if gu and ru:
                    add("face_knn_race", "knn_gender_race", g + " " + rc, p)
        # gender x race and religion x race, with "total" margins
        for a_dim in ("gender", "religion"):
            la = [l for l in r["idents"] if dims_of[l] == a_dim and l not in excluded]
            lb = [l for l in r["idents"] if dims_of[l] == "race" and l not in excluded]
            for a in la:
                for b in lb:
                    c = inter[(a, b)]
                    c[0] += 1
                    c[1] += 1 if p else 0
        for l in r["idents"]:
            if l in excluded:
                continue
            key = (l, "total") if dims_of[l] in ("gender", "religion") else ("total", l)
            if dims_of[l] in ("gender", "religion", "race"):
                c = inter[key]
                c[0] += 1
                c[1] += 1 if p else 0
    for name, counts in tables.items():
        write_counts(out / "expected" / (name + ".csv"), counts)
    with open(out / "expected" / "intersections.csv", "w", newline="") as f:
        w = csv.writer(f, lineterminator="\n")
        w.writerow(["label_a", "label_b", "raw", "passed"])
        for (a, b), (raw, passed) in sorted(inter.items()):
            w.writerow([a, b, raw, passed])
    summary = {
        "records": len(records),
        "skipped_lines": 3,
        "passed": sum(1 for r in records if r["passed"]),
        "threshold": threshold,
    }
    (out / "expected" / "summary.json").write_text(json.dumps(summary, indent=2, sort_keys=True) + "\n")


def write_config(out):
    cfg = {
        "shards": ["shards/part-*.jsonl"],
        "embeddings": ["embeddings.paem"],
        "face_embeddings": ["faces.paem"],
        "filter": {"top_frac": 0.3},
        "reference_db": "reference.paem",
        "ip_db": "ip_db.csv",
        "occupations": "occupations.csv",
        "fixtures": {"dir": "fixtures", "mode": "replay"},
        "min_support": {"identity_keywords": 1, "intersections": 10, "common_words": 30, "face": 1,
                        "languages": 50, "language_trend": 50, "cctld": 50, "websites": 50,
                        "news_sites": 20, "categories": 50, "years": 20, "ip_country": 50,
                        "occupations": 10},
        "knn": {"k_gender": 7, "k_race": 5, "p": 2, "unanimous_only": True, "holdout_fraction": 0.2},
        "seed": 20240101,
        "output_dir": "report",
    }
    (out / "config.json").write_text(json.dumps(cfg, indent=2) + "\n")


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--out", type=Path, default=DATA / "demo")
    ap.add_argument("--seed", type=int, default=20240101)
    args = ap.parse_args()
    files, threshold = build(args.out, args.seed)
    print("wrote %s: %d fixtures, threshold %r" % (args.out, files, threshold))


if __name__ == "__main__":
    main()
