"""Tests for the genetic layer: genes, prerequisites, mutation, hashes, actions."""
import random

import pytest

from eden.config import EngineConfig
from eden.functome import (ACTION_PARAM_KEYS, ACTIONS, PREREQ_PARAM_KEYS,
                           PREREQUISITES, ActionGene, Functome, GeneError,
                           check_prerequisite, execute_action, functome_hash,
                           mutate, node_hash, random_gene,
                           scan_available_actions)
from eden.grid import ARCHITECTOR, TRANSMITTER
from eden.runner import Entity, seed_entity


def make_entity(**overrides):
    cfg = EngineConfig(**overrides)
    return seed_entity(cfg)


def fresh_node(entity=None):
    entity = entity or make_entity(initial_nodes=1, seed=3)
    return entity, entity.nodes[min(entity.nodes)]


class TestVocabulary:
    def test_every_name_has_param_schema(self):
        assert set(ACTION_PARAM_KEYS) == set(ACTIONS)
        assert set(PREREQ_PARAM_KEYS) == set(PREREQUISITES)

    def test_unknown_action_rejected(self):
        with pytest.raises(GeneError):
            ActionGene(action="Dendrite_AllowNew",  # not the canonical spelling
                       prerequisite="TransmitterPresent")

    def test_unknown_prerequisite_rejected(self):
        with pytest.raises(GeneError):
            ActionGene(action="Apoptosis", prerequisite="Always")

    def test_random_gene_is_complete(self):
        rng = random.Random(0)
        for _ in range(100):
            gene = random_gene(rng, 8, 4)
            for key in gene.required_keys():
                assert key in gene.params


class TestPrerequisites:
    def _gene(self, prerequisite, **params):
        return ActionGene(action="Apoptosis", prerequisite=prerequisite,
                          params=params)

    def test_entity_clock_gate(self):
        entity, node = fresh_node()
        gene = self._gene("EnabledAfterEntityClock", entity_clock=5)
        assert not check_prerequisite(gene, node, entity.grid, 4, 2.0)
        assert check_prerequisite(gene, node, entity.grid, 5, 2.0)

    def test_node_clock_range(self):
        entity, node = fresh_node()
        gene = self._gene("AllowOn_ProcessNodeClockRange", min_clock=2, max_clock=4)
        for clock, expected in ((1, False), (2, True), (4, True), (5, False)):
            node.node_clock = clock
            assert check_prerequisite(gene, node, entity.grid, 0, 2.0) is expected

    def test_clock_frequency_window(self):
        entity, node = fresh_node()
        gene = self._gene("AllowOn_ClockFrequency", min_spikes=1, max_spikes=3)
        node.spike_count_epoch = 0
        assert not check_prerequisite(gene, node, entity.grid, 0, 2.0)
        node.spike_count_epoch = 2
        assert check_prerequisite(gene, node, entity.grid, 0, 2.0)

    def test_energy_requirement_reads_residual(self):
        entity, node = fresh_node()
        gene = self._gene("EnergyRequirement", min_energy=1.0)
        node.cem.p.fill(0.0)
        assert not check_prerequisite(gene, node, entity.grid, 0, 2.0)
        node.cem.p[0, 0, 0] = 1.5
        assert check_prerequisite(gene, node, entity.grid, 0, 2.0)

    def test_transmitter_presence_and_count(self):
        entity, node = fresh_node()
        grid = entity.grid
        for _ in range(2):
            grid.deposit(grid.new_payload(TRANSMITTER, 5, node.soma_position, 1.0, 3))
        grid.commit()
        present = self._gene("TransmitterPresent", index=5)
        absent = self._gene("TransmitterPresent", index=6)
        enough = self._gene("TransmitterPresentPayloadCount", index=5, min_count=2)
        toomany = self._gene("TransmitterPresentPayloadCount", index=5, min_count=3)
        assert check_prerequisite(present, node, grid, 0, 2.0)
        assert not check_prerequisite(absent, node, grid, 0, 2.0)
        assert check_prerequisite(enough, node, grid, 0, 2.0)
        assert not check_prerequisite(toomany, node, grid, 0, 2.0)

    def test_architector_presence_distinct_from_transmitter(self):
        entity, node = fresh_node()
        grid = entity.grid
        grid.deposit(grid.new_payload(TRANSMITTER, 1, node.soma_position, 1.0, 3))
        grid.commit()
        gene = self._gene("ArchitectorPresent", index=1)
        assert not check_prerequisite(gene, node, grid, 0, 2.0)
        grid.deposit(grid.new_payload(ARCHITECTOR, 1, node.soma_position, 1.0, 3))
        grid.commit()
        assert check_prerequisite(gene, node, grid, 0, 2.0)

    def test_missing_params_never_fire(self):
        entity, node = fresh_node()
        gene = self._gene("TransmitterPresent")  # no index param
        assert not check_prerequisite(gene, node, entity.grid, 0, 2.0)
        assert not check_prerequisite(gene, node, entity.grid, 0, 2.0)

    def test_scan_skips_disabled_genes(self):
        entity, node = fresh_node()
        node.functome.genes = [
            ActionGene(action="Apoptosis", prerequisite="EnabledAfterEntityClock",
                       params={"entity_clock": 0}, enabled=False),
            ActionGene(action="StimulateNeuroGenesis",
                       prerequisite="EnabledAfterEntityClock",
                       params={"entity_clock": 0}),
        ]
        hits = scan_available_actions(node, entity.grid, 10, 2.0)
        assert [g.action for g in hits] == ["StimulateNeuroGenesis"]


class TestMutation:
    def _functome(self, rng, n_genes=6):
        f = Functome(fid=0, mutation_rate=1.0)
        f.genes = [random_gene(rng, 8, 4) for _ in range(n_genes)]
        return f

    def test_stable_node_never_mutates(self):
        rng = random.Random(1)
        f = self._functome(rng)
        before = functome_hash(f)
        assert mutate(f, node_stability=0.9, stability_min=0.2, rng=rng) == 0
        assert functome_hash(f) == before

    def test_locked_never_mutates(self):
        rng = random.Random(2)
        f = self._functome(rng)
        f.locked = True
        before = functome_hash(f)
        assert mutate(f, node_stability=0.0, stability_min=0.2, rng=rng) == 0
        assert functome_hash(f) == before

    def test_unstable_node_mutates(self):
        rng = random.Random(3)
        f = self._functome(rng)
        before = functome_hash(f)
        count = mutate(f, node_stability=0.0, stability_min=0.2, rng=rng)
        assert count > 0
        assert functome_hash(f) != before

    def test_mutated_genes_remain_valid(self):
        rng = random.Random(4)
        f = self._functome(rng)
        for _ in range(50):
            mutate(f, 0.0, 0.2, rng)
        for gene in f.genes:
            assert gene.action in ACTIONS
            assert gene.prerequisite in PREREQUISITES
            for key in gene.required_keys():
                assert key in gene.params

    def test_zero_rate_is_inert(self):
        rng = random.Random(5)
        f = self._functome(rng)
        f.mutation_rate = 0.0
        assert mutate(f, 0.0, 0.2, rng) == 0

    def test_clone_has_lineage_and_same_hash(self):
        rng = random.Random(6)
        f = self._functome(rng)
        c = f.clone(new_fid=7)
        assert c.fid == 7
        assert c.lineage == [0]
        assert functome_hash(c) == functome_hash(f)
        mutate(c, 0.0, 0.2, rng)
        assert functome_hash(f) != functome_hash(c)  # deep copy, not aliasing


class TestHashes:
    def test_functome_hash_ignores_fid(self):
        rng = random.Random(7)
        genes = [random_gene(rng, 8, 4) for _ in range(3)]
        a = Functome(fid=0, genes=[ActionGene.from_dict(g.to_dict()) for g in genes])
        b = Functome(fid=99, genes=[ActionGene.from_dict(g.to_dict()) for g in genes])
        assert functome_hash(a) == functome_hash(b)

    def test_node_hash_tracks_morphology(self):
        entity, node = fresh_node()
        before = node_hash(node)
        node.axon_terminals.pop()
        assert node_hash(node) != before

    def test_node_hash_tracks_productions(self):
        entity, node = fresh_node()
        before = node_hash(node)
        node.allowed_tx_indices.add(max(node.allowed_tx_indices, default=0) + 1)
        assert node_hash(node) != before


class TestExecuteAction:
    def _gene(self, action, **params):
        return ActionGene(action=action, prerequisite="EnabledAfterEntityClock",
                          params=dict(params, entity_clock=0))

    def test_add_terminal(self):
        entity, node = fresh_node()
        n = len(node.axon_terminals)
        change = execute_action(self._gene("AxonTerminal_AddNew", emit_index=3),
                                node, entity, entity.rng)
        assert change.ok
        assert len(node.axon_terminals) == n + 1
        assert node.axon_terminals[-1].emit_transmitter_index == 3

    def test_remove_terminal_empty_refused(self):
        entity, node = fresh_node()
        node.axon_terminals.clear()
        change = execute_action(self._gene("AxonTerminal_RemoveRandom"),
                                node, entity, entity.rng)
        assert not change.ok

    def test_add_dendrite_respects_entry_plane_limit(self):
        entity, node = fresh_node()
        limit = node.cem.dim_xy ** 2
        gene = self._gene("Dentrite_AllowNew", accept_index=1)
        while len(node.dendrites) < limit:
            assert execute_action(gene, node, entity, entity.rng).ok
        change = execute_action(gene, node, entity, entity.rng)
        assert not change.ok
        assert len(node.dendrites) == limit

    def test_remove_dendrite(self):
        entity, node = fresh_node()
        n = len(node.dendrites)
        change = execute_action(self._gene("Dentrite_RemoveRandom"),
                                node, entity, entity.rng)
        assert change.ok and len(node.dendrites) == n - 1

    def test_allow_transmitter_production(self):
        entity, node = fresh_node()
        node.allowed_tx_indices = set()
        execute_action(self._gene("AllowTransmitterIndexProduction", produce_index=6),
                       node, entity, entity.rng)
        assert node.allowed_tx_indices == {6}

    def test_add_architector_production(self):
        entity, node = fresh_node()
        execute_action(self._gene("AddArchitectorIndexProduction",
                                  produce_index=2, target_action="Apoptosis"),
                       node, entity, entity.rng)
        assert node.allowed_arch_indices[2] == "Apoptosis"

    def test_neurogenesis_queued_not_applied(self):
        entity, node = fresh_node()
        n = len(entity.nodes)
        change = execute_action(self._gene("StimulateNeuroGenesis"),
                                node, entity, entity.rng)
        assert change.ok
        assert len(entity.nodes) == n  # commit happens at the Develop barrier
        assert len(entity._pending_neurogenesis) == 1

    def test_apoptosis_queued_not_applied(self):
        entity, node = fresh_node()
        change = execute_action(self._gene("Apoptosis"), node, entity, entity.rng)
        assert change.ok
        assert node.id in entity.nodes
        assert entity._pending_apoptosis == [node.id]


class TestPersistence:
    def test_roundtrip(self):
        rng = random.Random(8)
        f = Functome(fid=5, genes=[random_gene(rng, 8, 4) for _ in range(4)],
                     mutation_rate=0.25, locked=True, lineage=[1, 3],
                     metadata={"note": "x"})
        g = Functome.from_dict(f.to_dict())
        assert g.to_dict() == f.to_dict()
        assert functome_hash(g) == functome_hash(f)
