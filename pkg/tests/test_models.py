import dataclasses

import pytest

from src.errors import ValidationError
from src.models import (OPERATORS, CostDistribution, Label, PlanNode, PlanTree, Workload, one_hot, validate,
                        validate_plan)

from conftest import chain_plan, chain_query, chain_sample


class TestOneHot:
    def test_single_hot_entry(self):
        vec = one_hot("hash-join", OPERATORS)
        assert len(vec) == 6
        assert sum(vec) == 1.0
        assert vec[OPERATORS.index("hash-join")] == 1.0

    def test_unknown_value_rejected(self):
        with pytest.raises(ValidationError):
            one_hot("sort", OPERATORS)


class TestCostDistribution:
    def test_components(self):
        d = CostDistribution.from_components(0.4, 0.01, 0.03)
        assert d.total_variance == 0.01 + 0.03
        assert d.variance("data") == 0.01
        assert d.variance("model") == 0.03
        assert d.std("total") == pytest.approx(0.2)

    def test_inconsistent_total_rejected(self):
        with pytest.raises(ValidationError):
            CostDistribution(0.4, 0.01, 0.03, 0.5)

    def test_negative_variance_rejected(self):
        with pytest.raises(ValidationError):
            CostDistribution.from_components(0.4, -0.01, 0.0)

    def test_unknown_selector(self):
        with pytest.raises(ValidationError):
            CostDistribution.from_components(0.4, 0.1, 0.1).variance("epistemic")


class TestValidate:
    def test_valid_sample(self):
        assert validate(chain_sample()) == []

    def test_duplicate_table(self):
        sample = chain_sample()
        nodes = (sample.query.nodes[0], dataclasses.replace(sample.query.nodes[1], table_id=3))
        query = dataclasses.replace(sample.query, nodes=nodes)
        messages = [v.message for v in validate(dataclasses.replace(sample, query=query))]
        assert "duplicate table identifier" in messages

    def test_disconnected_graph(self):
        query = dataclasses.replace(chain_query(), edges=())
        query = dataclasses.replace(query, globals=dataclasses.replace(query.globals, join_count=0))
        messages = [v.message for v in validate(dataclasses.replace(chain_sample(), query=query))]
        assert "query graph disconnected" in messages

    def test_leaf_join_operator(self):
        plan = PlanTree((PlanNode("hash-join", (3,)), PlanNode("index-scan", (7,)),
                         PlanNode("hash-join", (3, 7), 0, 1)), 2)
        messages = [v.message for v in validate_plan(plan, chain_query())]
        assert "leaf is not an access operator over exactly one table" in messages

    def test_table_set_not_union(self):
        plan = PlanTree((PlanNode("table-scan", (3,)), PlanNode("index-scan", (7,)),
                         PlanNode("hash-join", (3,), 0, 1)), 2)
        messages = [v.message for v in validate_plan(plan, chain_query())]
        assert "table set is not the union of children" in messages

    def test_plan_not_a_tree(self):
        plan = PlanTree((PlanNode("table-scan", (3,)), PlanNode("hash-join", (3, 7), 0, 0)), 1)
        assert validate_plan(plan, chain_query())

    def test_aggregate_root(self):
        base = chain_plan()
        plan = PlanTree(base.nodes + (PlanNode("group-aggregate", (3, 7), 2),), 3)
        assert validate_plan(plan, chain_query()) == []

    def test_timeout_label_stores_threshold(self):
        ok = dataclasses.replace(chain_sample(), labels=(Label(0.5, False), Label(5.0, True)))
        assert validate(ok) == []
        bad = dataclasses.replace(chain_sample(), labels=(Label(0.5, False), Label(4.0, True)))
        assert [v.message for v in validate(bad)] == ["timed-out label does not store the timeout threshold"]

    def test_label_count_mismatch(self):
        sample = dataclasses.replace(chain_sample(), labels=(Label(0.5, False),))
        assert "plan and label counts differ" in [v.message for v in validate(sample)]


class TestPlanTree:
    def test_postorder_children_first(self):
        assert chain_plan().postorder() == [0, 1, 2]

    def test_signature_distinguishes_operators(self):
        assert chain_plan("hash-join").signature() != chain_plan("merge-join").signature()

    def test_operator_counts(self):
        counts = chain_plan().operator_counts()
        assert counts["hash-join"] == 1 and counts["table-scan"] == 1 and counts["merge-join"] == 0


class TestWorkload:
    def make(self):
        return Workload([chain_sample("train", 0), chain_sample("test", 1), chain_sample("test", 2)])

    def test_filter_keeps_query_ids(self):
        test = self.make().split("test")
        assert test.query_ids == [1, 2]
        assert [qid for qid, _ in test.items()] == [1, 2]

    def test_templates(self):
        w = self.make()
        assert w.template_ids() == [0, 1, 2]
        assert w.without_templates([1]).query_ids == [0, 2]
        assert w.with_templates([1]).query_ids == [1]

    def test_add_and_limit(self):
        w = self.make()
        joined = w.limit(1) + w.split("test")
        assert joined.query_ids == [0, 1, 2]
        assert joined.n_plans() == 6

    def test_best_time(self):
        assert chain_sample(times=(0.5, 0.8)).best_time == 0.5

    def test_root_table_set_incomplete(self):
        plan = PlanTree((PlanNode("table-scan", (3,)),), 0)
        assert "root table set incomplete" in [v.message for v in validate_plan(plan, chain_query())]

    def test_edge_endpoint_out_of_range(self):
        query = chain_query()
        edges = (dataclasses.replace(query.edges[0], right=2),)
        sample = dataclasses.replace(chain_sample(), query=dataclasses.replace(query, edges=edges))
        assert "edge endpoint out of range" in [v.message for v in validate(sample)]
