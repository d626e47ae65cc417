"""Generate the bundled synthetic FAQ fixtures under tests/data/.

The corpus plants four (verb, object) intents, fifteen sentences each, with
a known amount of PII. Dependency tags are emitted in utterance order so the
tag file aligns with the ingested corpus. Rerunning this script must be a
no-op on committed fixtures.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

from kgforge import corpus as corpus_mod
from kgforge.kg import TripleGraph, save_snapshot
from kgforge.kg.store import Edge, Node

DATA = Path(__file__).resolve().parent.parent / "tests" / "data"

# (word, pos, deprel); words may contain spaces and are joined by the
# segmenter. Heads are assigned by sentence shape below.
SUBJECTS = ["Em", "Mình", "Anh", "Chị"]
WISH_VERBS = ["muốn", "cần", "xin"]

GROUPS = [
    {
        "verb": "đăng ký",
        "object": "môn học",
        "tails": [
            [("bổ sung", "V", "adv")],
            [("trong", "E", "adv"), ("học kỳ", "N", "nmod"), ("mới", "A", "adv")],
            [("trên", "E", "adv"), ("hệ thống", "N", "nmod")],
            [("thêm", "R", "adv"), ("tín chỉ", "N", "nmod")],
            [("của", "E", "adv"), ("ngành", "N", "nmod"), ("chính", "A", "adv")],
        ],
    },
    {
        "verb": "hủy",
        "object": "lớp học",
        "tails": [
            [("đã", "R", "adv"), ("ghi danh", "V", "adv")],
            [("vì", "E", "adv"), ("trùng", "V", "adv"), ("lịch", "N", "adv")],
            [("buổi", "N", "nmod"), ("sáng", "N", "adv")],
            [("do", "E", "adv"), ("quá tải", "A", "adv")],
            [("ngay", "R", "adv"), ("tuần", "N", "nmod"), ("này", "P", "adv")],
        ],
    },
    {
        "verb": "cấp",
        "object": "bảng điểm",
        "tails": [
            [("tiếng", "N", "nmod"), ("Anh", "N", "adv")],
            [("bản", "N", "nmod"), ("gốc", "N", "adv")],
            [("để", "E", "adv"), ("nộp", "V", "adv"), ("hồ sơ", "N", "adv")],
            [("có", "V", "adv"), ("dấu", "N", "adv"), ("mộc", "N", "adv")],
            [("toàn", "A", "nmod"), ("khóa", "N", "adv")],
        ],
    },
    {
        "verb": "gia hạn",
        "object": "học phí",
        "tails": [
            [("đến", "E", "adv"), ("cuối", "N", "adv"), ("tháng", "N", "adv")],
            [("vì", "E", "adv"), ("khó khăn", "A", "adv")],
            [("chờ", "V", "adv"), ("học bổng", "N", "adv")],
            [("sang", "E", "adv"), ("đợt", "N", "adv"), ("hai", "M", "adv")],
            [("theo", "E", "adv"), ("diện", "N", "nmod"), ("chính sách", "N", "adv")],
        ],
    },
]

# PII snippets appended to specific sentences: (group, sentence index, tokens).
PII_TAILS = {
    (0, 2): [("MSSV", "N", "adv"), ("2112345", "M", "adv")],
    (1, 5): [("gọi", "V", "adv"), ("số", "N", "adv"), ("0912345678", "M", "adv")],
    (2, 8): [("MSSV", "N", "adv"), ("2045678", "M", "adv")],
    (3, 4): [("gửi", "V", "adv"), ("mail", "N", "adv"), ("sv.hcmut@hcmut.edu.vn", "N", "adv")],
    (0, 11): [("liên hệ", "V", "adv"), ("0987654321", "M", "adv")],
    (2, 13): [("MSSV", "N", "adv"), ("2198765", "M", "adv")],
    (3, 9): [("mail", "N", "adv"), ("hotro.sv@hcmut.edu.vn", "N", "adv")],
}

EXPECTED_REDACTIONS = {"student_id": 3, "phone_number": 2, "email": 2}


def build_sentence(group_idx: int, sent_idx: int) -> list[tuple[str, str, int, str]]:
    """Token descriptors (word, pos, head, deprel) for one planted sentence."""
    group = GROUPS[group_idx]
    subject = SUBJECTS[sent_idx % len(SUBJECTS)]
    tail = list(group["tails"][sent_idx % len(group["tails"])])
    tail += PII_TAILS.get((group_idx, sent_idx), [])

    tokens: list[tuple[str, str, int, str]] = []
    if sent_idx % 3 == 2:
        # direct form: subject verb object tail...
        root_pos, obj_pos = 2, 3
        tokens.append((subject, "P", root_pos, "sub"))
        tokens.append((group["verb"], "V", 0, "root"))
        tokens.append((group["object"], "N", root_pos, "dob"))
    else:
        # wish form: subject wish-verb verb object tail...
        root_pos, verb_pos, obj_pos = 2, 3, 4
        wish = WISH_VERBS[sent_idx % len(WISH_VERBS)]
        tokens.append((subject, "P", root_pos, "sub"))
        tokens.append((wish, "V", 0, "root"))
        tokens.append((group["verb"], "V", root_pos, "vmod"))
        tokens.append((group["object"], "N", verb_pos, "dob"))
    for word, pos, deprel in tail:
        head = obj_pos if deprel == "nmod" else root_pos
        tokens.append((word, pos, head, deprel))
    return tokens


def main() -> int:
    DATA.mkdir(parents=True, exist_ok=True)

    sentences = []  # (group, raw_text, descriptors)
    for g in range(len(GROUPS)):
        for s in range(15):
            desc = build_sentence(g, s)
            raw = " ".join(w for w, _, _, _ in desc) + "."
            sentences.append((g, raw, desc))

    lexicon = sorted(
        {w for _, _, desc in sentences for w, _, _, _ in desc if " " in w}
    )
    (DATA / "lexicon.txt").write_text("\n".join(lexicon) + "\n", encoding="utf-8")

    # Interleave groups across documents, 2-3 sentences per document.
    order = []
    for s in range(15):
        for g in range(len(GROUPS)):
            order.append(g * 15 + s)
    docs = []
    i = 0
    doc_no = 1
    while i < len(order):
        take = 2 if doc_no % 2 else 3
        chunk = order[i : i + take]
        text = "\n".join(sentences[idx][1] for idx in chunk)
        docs.append({"id": f"faq{doc_no:03d}", "source": "faq_helpdesk", "text": text,
                     "sent_idx": chunk})
        i += take
        doc_no += 1
    with open(DATA / "docs.jsonl", "w", encoding="utf-8") as fh:
        for d in docs:
            fh.write(json.dumps({"id": d["id"], "source": d["source"], "text": d["text"]},
                                ensure_ascii=False) + "\n")

    # Run the real ingest so tags align with what the pipeline produces.
    utts = corpus_mod.load_corpus(
        DATA / "docs.jsonl", DATA / "lexicon.txt",
        rules=corpus_mod.default_rules(include_ner=False),
    )
    assert len(utts) == 60, f"expected 60 utterances, got {len(utts)}"
    counts = {}
    for u in utts:
        for r in u.redactions:
            counts[r.kind] = counts.get(r.kind, 0) + 1
    assert counts == EXPECTED_REDACTIONS, counts

    doc_map = {d["id"]: d["sent_idx"] for d in docs}
    with open(DATA / "tagged.tsv", "w", encoding="utf-8") as fh:
        for u in utts:
            sent = sentences[doc_map[u.doc_id][u.index_in_doc]]
            forms = u.text.split()
            desc = sent[2]
            assert len(forms) == len(desc), (u.text, desc)
            fh.write(f"# {u.id}\n")
            for form, (_, pos, head, deprel) in zip(forms, desc):
                fh.write(f"{form}\t{pos}\t{head}\t{deprel}\n")
            fh.write("\n")

    policies = [
        {"id": "pol_dang_ky", "title": "Quy định đăng ký môn học",
         "body": "Sinh viên đăng ký môn học qua hệ thống trong thời gian quy định. "
                 "Việc đăng ký bổ sung tín chỉ được mở theo học kỳ."},
        {"id": "pol_rut_mon", "title": "Quy định rút môn học và hủy lớp",
         "body": "Sinh viên được hủy lớp học đã ghi danh trước tuần thứ tám. "
                 "Rút môn sau thời hạn sẽ nhận điểm R."},
        {"id": "pol_bang_diem", "title": "Thủ tục cấp bảng điểm",
         "body": "Phòng đào tạo cấp bảng điểm bản gốc và bản tiếng Anh có dấu mộc "
                 "cho sinh viên khi nộp hồ sơ hợp lệ."},
        {"id": "pol_hoc_phi", "title": "Quy chế thu và gia hạn học phí",
         "body": "Sinh viên khó khăn được gia hạn học phí sang đợt hai theo diện "
                 "chính sách khi có đơn hợp lệ."},
        {"id": "pol_ky_luat", "title": "Quy chế kỷ luật sinh viên",
         "body": "Các hành vi gian lận trong thi cử bị xử lý theo quy chế kỷ luật."},
        {"id": "pol_ktx", "title": "Nội quy ký túc xá",
         "body": "Sinh viên ở ký túc xá tuân thủ giờ giấc và giữ gìn tài sản chung."},
    ]
    with open(DATA / "policies.jsonl", "w", encoding="utf-8") as fh:
        for p in policies:
            fh.write(json.dumps(p, ensure_ascii=False) + "\n")

    # Gold pairs reference intents by their canonical deduplicated ids.
    from kgforge.label import dedup_intents

    planted = [
        ("đăng_ký môn_học", 0, 15, "pol_dang_ky"),
        ("hủy lớp_học", 1, 15, "pol_rut_mon"),
        ("cấp bảng_điểm", 2, 15, "pol_bang_diem"),
        ("gia_hạn học_phí", 3, 15, "pol_hoc_phi"),
    ]
    entities = dedup_intents([(lab, c, sup) for lab, c, sup, _ in planted])
    policy_of = {lab: pol for lab, _, _, pol in planted}
    (DATA / "gold.tsv").write_text(
        "".join(f"{e.id}\t{policy_of[e.label]}\n" for e in entities),
        encoding="utf-8",
    )

    graph = TripleGraph()
    graph.add_node(Node.make("Intent", "hủy_lớp_học", {"name": "hủy lớp_học"}))
    graph.add_node(Node.make("Policy", "quy_định_rút_môn",
                             {"name": "quy định rút môn học"}))
    graph.add_node(Node.make("Office", "phòng_đào_tạo", {"name": "phòng đào tạo"}))
    graph.add_edge(Edge.make("hủy_lớp_học", "RELATED_POLICY", "quy_định_rút_môn",
                             {"score": "0.81"}))
    graph.add_edge(Edge.make("quy_định_rút_môn", "MANAGED_BY", "phòng_đào_tạo"))
    save_snapshot(graph, DATA / "withdrawal_graph.jsonl")

    config = {
        "corpus_path": "docs.jsonl",
        "lexicon_path": "lexicon.txt",
        "tags_source": "file:tagged.tsv",
        "provider": "fallback:256:7",
        "n_neighbors": 8,
        "n_components": 2,
        "min_dist": 0.1,
        "n_epochs": 200,
        "min_cluster_size": 6,
        "min_samples": 3,
        "ngram": [1, 2],
        "top_keywords": 10,
        "reps_m": 7,
        "seed": 7,
    }
    (DATA / "discover_config.json").write_text(
        json.dumps(config, indent=2, ensure_ascii=False) + "\n", encoding="utf-8"
    )
    (DATA / "grid_config.json").write_text(
        json.dumps({"experiments": ["1", "2.1", "2.2", "3.1", "3.2"]}, indent=2) + "\n",
        encoding="utf-8",
    )
    print(f"fixtures written to {DATA}")
    return 0


if __name__ == "__main__":
    sys.exit(main())
