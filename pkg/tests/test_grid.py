import pytest

from griddet.grid import GridSpec, generate_grid


def brute_force_count(dim, cell, stride):
    """Enumerate placements directly from the stride rule."""
    n = 0
    i = 0
    while i * stride + cell <= dim + 1e-9:
        n += 1
        i += 1
    return n


def test_spec_validation():
    with pytest.raises(ValueError):
        GridSpec((), ())
    with pytest.raises(ValueError):
        GridSpec((2, 5), (0.5,))
    with pytest.raises(ValueError):
        GridSpec((2,), (1.0,))
    with pytest.raises(ValueError):
        GridSpec((0,), (0.5,))


def test_600_square_test_overlaps_count():
    boxes = generate_grid(GridSpec((2, 5, 10), (0.7, 0.5, 0.0)), 600, 600)
    assert len(boxes) == 197  # 16 + 81 + 100
    # Matches the per-scale brute-force placement enumerator.
    total = 0
    for k, a in zip((2, 5, 10), (0.7, 0.5, 0.0)):
        cell = 600 / k
        n = brute_force_count(600, cell, cell * (1 - a))
        total += n * n
    assert total == 197
    assert 160 <= len(boxes) <= 210


def test_single_cell_grid():
    boxes = generate_grid(GridSpec((1,), (0.0,)), 100, 100)
    assert len(boxes) == 1
    b = boxes[0]
    assert (b.cx, b.cy, b.w, b.h) == (50, 50, 100, 100)


def test_half_overlap_grid():
    boxes = generate_grid(GridSpec((2,), (0.5,)), 100, 100)
    assert len(boxes) == 9  # floor((100-50)/25)+1 = 3 per axis


def test_all_boxes_inside_image():
    for w, h in [(600, 600), (128, 128), (173, 97)]:
        boxes = generate_grid(GridSpec((2, 5, 10), (0.9, 0.8, 0.7)), w, h)
        for b in boxes:
            x1, y1, x2, y2 = b.corners()
            assert x1 >= -1e-9 and y1 >= -1e-9
            assert x2 <= w + 1e-9 and y2 <= h + 1e-9


def test_deterministic_and_ordered():
    spec = GridSpec((2, 5), (0.5, 0.25))
    a = generate_grid(spec, 211, 157)
    b = generate_grid(spec, 211, 157)
    assert a == b
    # Coarse scale comes first: first box has the largest cell.
    assert a[0].w == pytest.approx(211 / 2)
    assert a[-1].w == pytest.approx(211 / 5)


def test_counts_match_closed_form():
    for w, h in [(128, 128), (640, 480), (333, 250)]:
        for k, a in [(2, 0.9), (5, 0.8), (10, 0.7), (3, 0.0)]:
            boxes = generate_grid(GridSpec((k,), (a,)), w, h)
            cw, ch = w / k, h / k
            nx = brute_force_count(w, cw, cw * (1 - a))
            ny = brute_force_count(h, ch, ch * (1 - a))
            assert len(boxes) == nx * ny


def test_invalid_image_dims():
    with pytest.raises(ValueError):
        generate_grid(GridSpec((2,), (0.0,)), 0, 10)


def test_row_major_order_within_scale():
    boxes = generate_grid(GridSpec((2,), (0.0,)), 100, 100)
    assert [b.cy for b in boxes] == [25, 25, 75, 75]
    assert [b.cx for b in boxes] == [25, 75, 25, 75]
